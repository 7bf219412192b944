"""
Loader for image classification datasets (CIFAR-10/100 binary batches, MNIST IDX).
"""
import gzip
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from entaug.exceptions import IngestionError, InvalidInputError

logger = logging.getLogger(__name__)

CIFAR_SIDE = 32
CIFAR_PIXELS = 3 * CIFAR_SIDE * CIFAR_SIDE
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    images: np.ndarray          # (N, H, W, C) uint8
    labels: np.ndarray          # (N,) int64
    k: int
    split: str
    mean: np.ndarray = field(default=None)  # per channel, on the [0, 1] scale
    std: np.ndarray = field(default=None)
    name: str = ""

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.dtype != np.uint8:
            raise InvalidInputError(f"images must be a uint8 (N, H, W, C) array, got {self.images.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.shape[0] != self.labels.shape[0]:
            raise InvalidInputError("images and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise InvalidInputError(f"labels must lie in [0, {self.k})")
        if self.mean is None or self.std is None:
            self.mean, self.std = channel_stats(self.images)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def take(self, indices: Sequence[int], split: Optional[str] = None) -> "Dataset":
        """Rows at `indices`, keeping the parent's normalization statistics."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.k, split or self.split,
                       self.mean.copy(), self.std.copy(), self.name)


def channel_stats(images: np.ndarray, chunk: int = 4096) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std of v/255, accumulated in exact integer chunks."""
    channels = images.shape[-1]
    total = np.zeros(channels, dtype=np.int64)
    total_sq = np.zeros(channels, dtype=np.int64)
    for start in range(0, images.shape[0], chunk):
        block = images[start:start + chunk].reshape(-1, channels).astype(np.int64)
        total += block.sum(axis=0)
        total_sq += (block * block).sum(axis=0)
    count = max(1, images.shape[0] * images.shape[1] * images.shape[2])
    mean = total / count / 255.0
    var = total_sq / count / (255.0 ** 2) - mean ** 2
    std = np.sqrt(np.maximum(var, 0.0))
    return mean, std


def _read_bytes(path: str) -> bytes:
    if not os.path.isfile(path):
        raise IngestionError(path, 0, "file not found")
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def parse_cifar_records(data: bytes, path: str, label_bytes: int = 1, label_offset: int = 0,
                        k: int = 10) -> Tuple[np.ndarray, np.ndarray]:
    """Decode <label bytes><1024 R><1024 G><1024 B> records into (N, 32, 32, 3)."""
    record = label_bytes + CIFAR_PIXELS
    n_full = len(data) // record
    if n_full == 0 or len(data) % record:
        raise IngestionError(path, n_full * record, f"truncated record (file size {len(data)} "
                                                    f"is not a positive multiple of {record})")
    rows = np.frombuffer(data, dtype=np.uint8).reshape(n_full, record)
    labels = rows[:, label_offset].astype(np.int64)
    bad = np.flatnonzero(labels >= k)
    if bad.size:
        raise IngestionError(path, int(bad[0]) * record + label_offset, f"label {labels[bad[0]]} >= {k}")
    images = rows[:, label_bytes:].reshape(n_full, 3, CIFAR_SIDE, CIFAR_SIDE).transpose(0, 2, 3, 1)
    return np.ascontiguousarray(images), labels


def write_cifar_records(images: np.ndarray, labels: np.ndarray, path: str):
    """Inverse of parse_cifar_records for single-label (CIFAR-10) batches."""
    planar = images.transpose(0, 3, 1, 2).reshape(images.shape[0], CIFAR_PIXELS)
    rows = np.concatenate([labels.astype(np.uint8)[:, None], planar], axis=1)
    with open(path, "wb") as f:
        f.write(np.ascontiguousarray(rows).tobytes())


def parse_idx_images(data: bytes, path: str) -> np.ndarray:
    if len(data) < 16:
        raise IngestionError(path, len(data), "short IDX image header")
    magic, n, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise IngestionError(path, 0, f"bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    size = n * rows * cols
    if len(data) < 16 + size:
        raise IngestionError(path, len(data), f"truncated IDX images (need {16 + size} bytes)")
    pixels = np.frombuffer(data, dtype=np.uint8, count=size, offset=16)
    return pixels.reshape(n, rows, cols, 1).copy()


def parse_idx_labels(data: bytes, path: str) -> np.ndarray:
    if len(data) < 8:
        raise IngestionError(path, len(data), "short IDX label header")
    magic, n = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise IngestionError(path, 0, f"bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(data) < 8 + n:
        raise IngestionError(path, len(data), f"truncated IDX labels (need {8 + n} bytes)")
    return np.frombuffer(data, dtype=np.uint8, count=n, offset=8).astype(np.int64)


class DatasetLoader:
    """Finds dataset files under `source_dir` (directly or in the archive's usual sub-folder)."""

    CIFAR10_DIRS = ("", "cifar-10-batches-bin")
    CIFAR100_DIRS = ("", "cifar-100-binary")
    MNIST_DIRS = ("", "mnist", "MNIST/raw")

    def __init__(self, source_dir: str):
        self.source_dir = source_dir

    def _locate(self, subdirs: Sequence[str], filename: str, allow_gz: bool = False) -> str:
        names = [filename, filename + ".gz"] if allow_gz else [filename]
        for sub in subdirs:
            for name in names:
                fpath = os.path.join(self.source_dir, sub, name)
                if os.path.isfile(fpath):
                    return fpath
        # Report the canonical location when nothing matches
        return os.path.join(self.source_dir, subdirs[-1], filename)

    def _read_cifar(self, subdirs, files: List[str], label_bytes: int, label_offset: int, k: int):
        images, labels = [], []
        for fname in files:
            fpath = self._locate(subdirs, fname)
            imgs, labs = parse_cifar_records(_read_bytes(fpath), fpath, label_bytes, label_offset, k)
            logger.debug(f"Read {len(labs)} records from {fpath}")
            images.append(imgs)
            labels.append(labs)
        return np.concatenate(images), np.concatenate(labels)

    @staticmethod
    def _check_count(name: str, split: str, got: int, expected: int):
        if got != expected:
            logger.warning(f"{name} {split}: read {got} records, the standard split has {expected}")

    def load_cifar10(self) -> Tuple[Dataset, Dataset]:
        train_x, train_y = self._read_cifar(
            self.CIFAR10_DIRS, [f"data_batch_{i}.bin" for i in range(1, 6)], 1, 0, 10)
        test_x, test_y = self._read_cifar(self.CIFAR10_DIRS, ["test_batch.bin"], 1, 0, 10)
        return self._finish("cifar10", train_x, train_y, test_x, test_y, 10, 50000, 10000)

    def load_cifar100(self) -> Tuple[Dataset, Dataset]:
        # Records carry <coarse><fine>; the fine label is the class
        train_x, train_y = self._read_cifar(self.CIFAR100_DIRS, ["train.bin"], 2, 1, 100)
        test_x, test_y = self._read_cifar(self.CIFAR100_DIRS, ["test.bin"], 2, 1, 100)
        return self._finish("cifar100", train_x, train_y, test_x, test_y, 100, 50000, 10000)

    def load_mnist(self) -> Tuple[Dataset, Dataset]:
        splits = []
        for prefix in ("train", "t10k"):
            img_path = self._locate(self.MNIST_DIRS, f"{prefix}-images-idx3-ubyte", allow_gz=True)
            lab_path = self._locate(self.MNIST_DIRS, f"{prefix}-labels-idx1-ubyte", allow_gz=True)
            images = parse_idx_images(_read_bytes(img_path), img_path)
            labels = parse_idx_labels(_read_bytes(lab_path), lab_path)
            if images.shape[0] != labels.shape[0]:
                raise IngestionError(lab_path, 4, f"{labels.shape[0]} labels for {images.shape[0]} images")
            if labels.size and labels.max() >= 10:
                raise IngestionError(lab_path, 8 + int(np.argmax(labels >= 10)), "label >= 10")
            splits.append((images, labels))
        (train_x, train_y), (test_x, test_y) = splits
        return self._finish("mnist", train_x, train_y, test_x, test_y, 10, 60000, 10000)

    def _finish(self, name, train_x, train_y, test_x, test_y, k, n_train, n_test):
        self._check_count(name, "train", len(train_y), n_train)
        self._check_count(name, "test", len(test_y), n_test)
        mean, std = channel_stats(train_x)
        train = Dataset(train_x, train_y, k, "train", mean, std, name)
        test = Dataset(test_x, test_y, k, "test", mean.copy(), std.copy(), name)
        logger.info(f"Loaded {name}: {len(train)} train / {len(test)} test, k={k}")
        return train, test

    def load(self, name: str) -> Tuple[Dataset, Dataset]:
        loaders = {"cifar10": self.load_cifar10, "cifar100": self.load_cifar100, "mnist": self.load_mnist}
        if name not in loaders:
            raise InvalidInputError(f"no file loader for dataset '{name}'")
        return loaders[name]()


def load_cifar10(source_dir: str) -> Tuple[Dataset, Dataset]:
    return DatasetLoader(source_dir).load_cifar10()


def load_cifar100(source_dir: str) -> Tuple[Dataset, Dataset]:
    return DatasetLoader(source_dir).load_cifar100()


def load_mnist(source_dir: str) -> Tuple[Dataset, Dataset]:
    return DatasetLoader(source_dir).load_mnist()
