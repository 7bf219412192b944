"""
Preprocessing: normalization, the crop+flip baseline augmentation and
class-stratified subsetting for desk-scale runs.
"""
from typing import Sequence

import numpy as np

from entaug.augmentation.transforms import AugRng
from entaug.exceptions import InvalidInputError
from entaug.ingestion.loader import Dataset

BASELINE_PAD = 4


def normalize(img: np.ndarray, mean: Sequence[float], std: Sequence[float]) -> np.ndarray:
    """(v / 255 - mean) / std per channel; works on one image or a stacked batch."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if np.any(std <= 0):
        raise InvalidInputError("std must be > 0 for every channel")
    return (np.asarray(img, dtype=np.float64) / 255.0 - mean) / std


def crop_and_flip(img: np.ndarray, top: int, left: int, flip: bool,
                  pad: int = BASELINE_PAD, padding: str = "zero") -> np.ndarray:
    """Pad `pad` pixels per side, crop back to size at (top, left), optionally mirror."""
    h, w = img.shape[:2]
    if not (0 <= top <= 2 * pad and 0 <= left <= 2 * pad):
        raise InvalidInputError(f"crop offset ({top}, {left}) outside [0, {2 * pad}]")
    widths = ((pad, pad), (pad, pad), (0, 0))
    if padding == "reflect":
        padded = np.pad(img, widths, mode="reflect")
    else:
        padded = np.pad(img, widths, mode="constant", constant_values=0)
    out = padded[top:top + h, left:left + w]
    if flip:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def baseline_augment(img: np.ndarray, rng: AugRng, pad: int = BASELINE_PAD,
                     padding: str = "zero", flip: bool = True) -> np.ndarray:
    top = rng.integers(0, 2 * pad + 1)
    left = rng.integers(0, 2 * pad + 1)
    # The coin is drawn even when flipping is off so later draws keep their positions
    coin = rng.coin()
    return crop_and_flip(img, top, left, flip and coin, pad, padding)


def stratified_counts(labels: np.ndarray, k: int, n: int) -> np.ndarray:
    """Per-class quotas proportional to class frequency, largest remainders first."""
    counts = np.bincount(labels, minlength=k)
    exact = counts * (n / counts.sum())
    quota = np.floor(exact).astype(np.int64)
    short = n - int(quota.sum())
    # ties resolve to the lower class index (stable sort)
    order = np.argsort(-(exact - quota), kind="stable")
    for c in order:
        if short == 0:
            break
        if quota[c] < counts[c]:
            quota[c] += 1
            short -= 1
    return quota


def subset(ds: Dataset, n: int, seed: int) -> Dataset:
    """Deterministic class-stratified sample of `n` rows, kept in original order."""
    if n > len(ds):
        raise InvalidInputError(f"subset size {n} exceeds dataset size {len(ds)}")
    if n < 1:
        raise InvalidInputError("subset size must be >= 1")
    rng = np.random.default_rng(seed)
    quota = stratified_counts(ds.labels, ds.k, n)
    chosen = []
    for c in range(ds.k):
        members = np.flatnonzero(ds.labels == c)
        if quota[c]:
            chosen.append(rng.permutation(members)[:quota[c]])
    indices = np.sort(np.concatenate(chosen)) if chosen else np.empty(0, dtype=np.int64)
    return ds.take(indices)
