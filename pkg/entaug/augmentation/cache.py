"""
Entropy cache: per-sample normalized entropy and magnitude from the most recent
training forward pass, so EntAugment reads magnitudes without extra model calls.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Sequence, Union

import numpy as np

from entaug.exceptions import InvalidInputError
from entaug.numerics.entropy import check_probs, entropy_and_magnitude

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampleState:
    sample_index: int
    norm_entropy: float
    mag: float
    last_update_epoch: int


class EntropyCache:
    """Column store of SampleState rows, one per training sample.

    Reads may run concurrently; writes happen between batches (single writer).
    """

    def __init__(self, n_samples: int):
        if n_samples < 1:
            raise InvalidInputError("cache needs at least one sample")
        # Before any forward pass every sample is treated as maximally uncertain
        self.norm_entropy = np.ones(n_samples, dtype=np.float64)
        self.mag = np.zeros(n_samples, dtype=np.float64)
        self.last_update_epoch = np.full(n_samples, -1, dtype=np.int64)

    def __len__(self) -> int:
        return self.mag.shape[0]

    def _check_indices(self, indices: Union[int, Sequence[int], np.ndarray]) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if np.any(idx < 0) or np.any(idx >= len(self)):
            raise InvalidInputError(f"sample index out of range for cache of size {len(self)}")
        return idx

    def get(self, sample_index: int) -> SampleState:
        i = int(self._check_indices(sample_index))
        return SampleState(i, float(self.norm_entropy[i]), float(self.mag[i]), int(self.last_update_epoch[i]))

    def magnitudes(self, indices: Sequence[int]) -> np.ndarray:
        return self.mag[self._check_indices(indices)].copy()

    def update(self, sample_index: int, probs: np.ndarray, epoch: int):
        self.update_batch([sample_index], np.asarray(probs, dtype=np.float64)[None, :], epoch)

    def update_batch(self, indices: Sequence[int], probs: np.ndarray, epoch: int):
        idx = self._check_indices(indices)
        p = check_probs(probs)
        if p.ndim != 2 or p.shape[0] != idx.shape[0]:
            raise InvalidInputError(f"expected {idx.shape[0]} probability rows, got shape {p.shape}")
        h, m = entropy_and_magnitude(p)
        self.norm_entropy[idx] = h
        self.mag[idx] = m
        self.last_update_epoch[idx] = epoch

    def mean_norm_entropy(self) -> float:
        return float(self.norm_entropy.mean())

    def mean_magnitude(self) -> float:
        return float(self.mag.mean())

    def snapshot(self) -> "EntropyCache":
        copy = EntropyCache(len(self))
        copy.norm_entropy[:] = self.norm_entropy
        copy.mag[:] = self.mag
        copy.last_update_epoch[:] = self.last_update_epoch
        return copy

    def to_arrays(self) -> Dict[str, np.ndarray]:
        return {
            "norm_entropy": self.norm_entropy.copy(),
            "mag": self.mag.copy(),
            "last_update_epoch": self.last_update_epoch.copy(),
        }

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "EntropyCache":
        cache = cls(int(arrays["mag"].shape[0]))
        cache.norm_entropy[:] = arrays["norm_entropy"]
        cache.mag[:] = arrays["mag"]
        cache.last_update_epoch[:] = arrays["last_update_epoch"]
        return cache


def init_cache(n_samples: int) -> EntropyCache:
    return EntropyCache(n_samples)


def update_cache(cache: EntropyCache, sample_index: int, probs: np.ndarray, epoch: int):
    cache.update(sample_index, probs, epoch)
