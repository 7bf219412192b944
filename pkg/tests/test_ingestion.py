"""
Tests for dataset ingestion, preprocessing and the synthetic generator.
"""
import gzip
import os
import struct
import tempfile
import unittest

import numpy as np

from entaug.augmentation.transforms import AugRng
from entaug.exceptions import IngestionError, InvalidInputError
from entaug.ingestion.loader import (
    CIFAR_PIXELS, Dataset, DatasetLoader, channel_stats, load_cifar10, load_cifar100, load_mnist,
    parse_cifar_records, parse_idx_images, parse_idx_labels, write_cifar_records,
)
from entaug.ingestion.preprocessing import (
    baseline_augment, crop_and_flip, normalize, stratified_counts, subset,
)
from entaug.ingestion.synthetic import make_synthetic


def idx_images(images: np.ndarray) -> bytes:
    n, rows, cols = images.shape[:3]
    return struct.pack(">IIII", 0x803, n, rows, cols) + images.astype(np.uint8).tobytes()


def idx_labels(labels: np.ndarray) -> bytes:
    return struct.pack(">II", 0x801, len(labels)) + labels.astype(np.uint8).tobytes()


def read_cifar_bytewise(data: bytes):
    images, labels = [], []
    record = 1 + CIFAR_PIXELS
    for start in range(0, len(data), record):
        labels.append(data[start])
        img = np.zeros((32, 32, 3), dtype=np.uint8)
        for c in range(3):
            for y in range(32):
                for x in range(32):
                    img[y, x, c] = data[start + 1 + c * 1024 + y * 32 + x]
        images.append(img)
    return np.stack(images), np.array(labels)


def read_idx_bytewise(image_data: bytes, label_data: bytes):
    _, n, rows, cols = struct.unpack_from(">IIII", image_data, 0)
    images = np.zeros((n, rows, cols, 1), dtype=np.uint8)
    pos = 16
    for i in range(n):
        for y in range(rows):
            for x in range(cols):
                images[i, y, x, 0] = image_data[pos]
                pos += 1
    _, count = struct.unpack_from(">II", label_data, 0)
    return images, np.array([label_data[8 + i] for i in range(count)])


def cifar_bytes(seed: int, n: int) -> bytes:
    rows = np.random.default_rng(seed).integers(0, 256, size=(n, 1 + CIFAR_PIXELS), dtype=np.uint8)
    rows[:, 0] %= 10
    return rows.tobytes()


class TestCifarRecords(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        rng = np.random.default_rng(0)
        self.images = rng.integers(0, 256, size=(5, 32, 32, 3), dtype=np.uint8)
        self.labels = np.array([0, 9, 3, 3, 1])

    def tearDown(self):
        self.tmp.cleanup()

    def test_write_then_parse(self):
        path = os.path.join(self.tmp.name, "batch.bin")
        write_cifar_records(self.images, self.labels, path)
        with open(path, "rb") as f:
            data = f.read()
        self.assertEqual(len(data), 5 * (1 + CIFAR_PIXELS))
        images, labels = parse_cifar_records(data, path)
        np.testing.assert_array_equal(images, self.images)
        np.testing.assert_array_equal(labels, self.labels)

    def test_matches_bytewise_reader(self):
        data = cifar_bytes(3, 2)
        images, labels = parse_cifar_records(data, "batch.bin")
        expected_images, expected_labels = read_cifar_bytewise(data)
        np.testing.assert_array_equal(images, expected_images)
        np.testing.assert_array_equal(labels, expected_labels)

    def test_rewrite_is_byte_identical(self):
        data = cifar_bytes(4, 3)
        path = os.path.join(self.tmp.name, "again.bin")
        write_cifar_records(*parse_cifar_records(data, "batch.bin"), path)
        with open(path, "rb") as f:
            self.assertEqual(f.read(), data)

    def test_planar_layout(self):
        record = bytes([7]) + bytes([10]) * 1024 + bytes([20]) * 1024 + bytes([30]) * 1024
        images, labels = parse_cifar_records(record, "x.bin")
        self.assertEqual(labels.tolist(), [7])
        self.assertEqual(images[0, 5, 5].tolist(), [10, 20, 30])

    def test_truncated(self):
        with self.assertRaises(IngestionError) as ctx:
            parse_cifar_records(b"\x00" * (CIFAR_PIXELS + 10), "short.bin")
        self.assertIn("short.bin @ byte", str(ctx.exception))

    def test_label_out_of_range(self):
        record = bytes([10]) + bytes(CIFAR_PIXELS)
        with self.assertRaises(IngestionError):
            parse_cifar_records(record, "bad.bin", k=10)

    def test_cifar10_directory(self):
        root = os.path.join(self.tmp.name, "cifar-10-batches-bin")
        os.makedirs(root)
        for i in range(1, 6):
            write_cifar_records(self.images, self.labels, os.path.join(root, f"data_batch_{i}.bin"))
        write_cifar_records(self.images[:2], self.labels[:2], os.path.join(root, "test_batch.bin"))
        train, test = load_cifar10(self.tmp.name)
        self.assertEqual(len(train), 25)
        self.assertEqual(len(test), 2)
        self.assertEqual(train.k, 10)
        np.testing.assert_array_equal(test.mean, train.mean)

    def test_cifar100_fine_labels(self):
        def records(n, fine):
            rows = [bytes([1, f]) + bytes([f]) * CIFAR_PIXELS for f in fine[:n]]
            return b"".join(rows)
        with open(os.path.join(self.tmp.name, "train.bin"), "wb") as f:
            f.write(records(3, [99, 0, 42]))
        with open(os.path.join(self.tmp.name, "test.bin"), "wb") as f:
            f.write(records(1, [5]))
        train, test = load_cifar100(self.tmp.name)
        self.assertEqual(train.labels.tolist(), [99, 0, 42])
        self.assertEqual(train.k, 100)
        self.assertEqual(int(test.images[0, 0, 0, 0]), 5)

    def test_missing_files(self):
        with self.assertRaises(IngestionError):
            load_cifar10(self.tmp.name)
        with self.assertRaises(InvalidInputError):
            DatasetLoader(self.tmp.name).load("imagenet")


class TestIdx(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        rng = np.random.default_rng(1)
        self.images = rng.integers(0, 256, size=(6, 28, 28), dtype=np.uint8)
        self.labels = np.array([0, 1, 2, 9, 5, 5])

    def tearDown(self):
        self.tmp.cleanup()

    def test_parse(self):
        images = parse_idx_images(idx_images(self.images), "img")
        self.assertEqual(images.shape, (6, 28, 28, 1))
        np.testing.assert_array_equal(images[..., 0], self.images)
        np.testing.assert_array_equal(parse_idx_labels(idx_labels(self.labels), "lab"), self.labels)

    def test_matches_bytewise_reader(self):
        image_data, label_data = idx_images(self.images), idx_labels(self.labels)
        expected_images, expected_labels = read_idx_bytewise(image_data, label_data)
        np.testing.assert_array_equal(parse_idx_images(image_data, "img"), expected_images)
        np.testing.assert_array_equal(parse_idx_labels(label_data, "lab"), expected_labels)

    def test_bad_magic(self):
        data = bytearray(idx_images(self.images))
        data[3] = 0x01
        with self.assertRaises(IngestionError) as ctx:
            parse_idx_images(bytes(data), "img")
        self.assertIn("@ byte 0", str(ctx.exception))
        with self.assertRaises(IngestionError):
            parse_idx_labels(idx_images(self.images), "lab")

    def test_truncated(self):
        with self.assertRaises(IngestionError):
            parse_idx_images(idx_images(self.images)[:-1], "img")
        with self.assertRaises(IngestionError):
            parse_idx_labels(idx_labels(self.labels)[:-2], "lab")
        with self.assertRaises(IngestionError):
            parse_idx_images(b"\x00\x00", "img")

    def test_load_mnist_plain_and_gz(self):
        files = {
            "train-images-idx3-ubyte": idx_images(self.images),
            "train-labels-idx1-ubyte": idx_labels(self.labels),
            "t10k-images-idx3-ubyte.gz": gzip.compress(idx_images(self.images[:2])),
            "t10k-labels-idx1-ubyte.gz": gzip.compress(idx_labels(self.labels[:2])),
        }
        for name, data in files.items():
            with open(os.path.join(self.tmp.name, name), "wb") as f:
                f.write(data)
        train, test = load_mnist(self.tmp.name)
        self.assertEqual(train.image_shape, (28, 28, 1))
        self.assertEqual(len(train), 6)
        self.assertEqual(len(test), 2)
        self.assertEqual(train.name, "mnist")

    def test_count_mismatch(self):
        files = {
            "train-images-idx3-ubyte": idx_images(self.images),
            "train-labels-idx1-ubyte": idx_labels(self.labels[:4]),
            "t10k-images-idx3-ubyte": idx_images(self.images[:2]),
            "t10k-labels-idx1-ubyte": idx_labels(self.labels[:2]),
        }
        for name, data in files.items():
            with open(os.path.join(self.tmp.name, name), "wb") as f:
                f.write(data)
        with self.assertRaises(IngestionError):
            load_mnist(self.tmp.name)


class TestPreprocessing(unittest.TestCase):
    def setUp(self):
        self.img = np.random.default_rng(2).integers(0, 256, size=(8, 10, 3), dtype=np.uint8)

    def test_normalize(self):
        out = normalize(np.full((2, 2, 1), 255, dtype=np.uint8), [0.5], [0.25])
        np.testing.assert_allclose(out, np.full((2, 2, 1), 2.0))
        with self.assertRaises(InvalidInputError):
            normalize(self.img, [0.5, 0.5, 0.5], [0.2, 0.0, 0.2])

    def test_centered_crop_is_identity(self):
        np.testing.assert_array_equal(crop_and_flip(self.img, 4, 4, False), self.img)
        np.testing.assert_array_equal(crop_and_flip(self.img, 4, 4, True), self.img[:, ::-1])

    def test_flip_twice_restores(self):
        once = crop_and_flip(self.img, 4, 4, True)
        np.testing.assert_array_equal(crop_and_flip(once, 4, 4, True), self.img)

    def test_offset_crop_zero_pads(self):
        out = crop_and_flip(self.img, 0, 8, False)
        np.testing.assert_array_equal(out[4:, :6], self.img[:4, 4:])
        self.assertTrue(np.all(out[:4] == 0))
        self.assertTrue(np.all(out[:, 6:] == 0))

    def test_reflect_padding_has_no_zeros_from_padding(self):
        img = np.full((8, 8, 1), 9, dtype=np.uint8)
        self.assertTrue(np.all(crop_and_flip(img, 0, 0, False, padding="reflect") == 9))

    def test_offset_bounds(self):
        with self.assertRaises(InvalidInputError):
            crop_and_flip(self.img, 9, 0, False)

    def test_baseline_is_seeded(self):
        a = baseline_augment(self.img, AugRng(1, 2, 3))
        b = baseline_augment(self.img, AugRng(1, 2, 3))
        np.testing.assert_array_equal(a, b)
        self.assertEqual(a.shape, self.img.shape)

    def test_flip_off_keeps_draw_positions(self):
        rng_a, rng_b = AugRng(0, 0, 1), AugRng(0, 0, 1)
        baseline_augment(self.img, rng_a, flip=True)
        baseline_augment(self.img, rng_b, flip=False)
        self.assertEqual(rng_a.uniform(), rng_b.uniform())


class TestSubsetAndSynthetic(unittest.TestCase):
    def setUp(self):
        labels = np.array([0] * 50 + [1] * 30 + [2] * 20)
        images = np.zeros((100, 4, 4, 1), dtype=np.uint8)
        images[:, 0, 0, 0] = np.arange(100)
        self.ds = Dataset(images, labels, 3, "train")

    def test_stratified_counts(self):
        np.testing.assert_array_equal(stratified_counts(self.ds.labels, 3, 10), [5, 3, 2])
        self.assertEqual(int(stratified_counts(self.ds.labels, 3, 7).sum()), 7)

    def test_subset(self):
        small = subset(self.ds, 10, seed=3)
        self.assertEqual(len(small), 10)
        np.testing.assert_array_equal(np.bincount(small.labels, minlength=3), [5, 3, 2])
        again = subset(self.ds, 10, seed=3)
        np.testing.assert_array_equal(small.images, again.images)
        np.testing.assert_array_equal(small.mean, self.ds.mean)
        order = small.images[:, 0, 0, 0]
        self.assertTrue(np.all(np.diff(order.astype(int)) > 0))

    def test_subset_bounds(self):
        with self.assertRaises(InvalidInputError):
            subset(self.ds, 101, seed=0)
        with self.assertRaises(InvalidInputError):
            subset(self.ds, 0, seed=0)

    def test_channel_stats(self):
        images = np.zeros((2, 1, 1, 1), dtype=np.uint8)
        images[1] = 255
        mean, std = channel_stats(images)
        np.testing.assert_allclose(mean, [0.5])
        np.testing.assert_allclose(std, [0.5])

    def test_dataset_validation(self):
        with self.assertRaises(InvalidInputError):
            Dataset(np.zeros((2, 4, 4, 1), dtype=np.uint8), np.array([0, 3]), 3, "train")
        with self.assertRaises(InvalidInputError):
            Dataset(np.zeros((2, 4, 4), dtype=np.uint8), np.array([0, 1]), 3, "train")

    def test_synthetic(self):
        train, test = make_synthetic(40, 12, k=4, size=10, channels=3, seed=5)
        self.assertEqual(train.images.shape, (40, 10, 10, 3))
        self.assertEqual(len(test), 12)
        np.testing.assert_array_equal(np.bincount(train.labels), [10] * 4)
        np.testing.assert_array_equal(test.mean, train.mean)
        again, _ = make_synthetic(40, 12, k=4, size=10, channels=3, seed=5)
        np.testing.assert_array_equal(train.images, again.images)


if __name__ == "__main__":
    unittest.main()
