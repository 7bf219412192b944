"""
Synthetic image classes: one fixed random prototype per class plus bounded noise,
so the classes are linearly separable in pixel space.
"""
from typing import Tuple

import numpy as np

from entaug.ingestion.loader import Dataset, channel_stats


def make_synthetic(n_train: int, n_test: int, k: int = 2, size: int = 12, channels: int = 1,
                   seed: int = 0, noise: int = 24) -> Tuple[Dataset, Dataset]:
    rng = np.random.default_rng(seed)
    prototypes = rng.integers(40, 216, size=(k, size, size, channels))

    def draw(n: int) -> Tuple[np.ndarray, np.ndarray]:
        labels = np.arange(n, dtype=np.int64) % k
        rng.shuffle(labels)
        jitter = rng.integers(-noise, noise + 1, size=(n, size, size, channels))
        images = np.clip(prototypes[labels] + jitter, 0, 255).astype(np.uint8)
        return images, labels

    train_x, train_y = draw(n_train)
    test_x, test_y = draw(n_test)
    mean, std = channel_stats(train_x)
    train = Dataset(train_x, train_y, k, "train", mean, std, "synthetic")
    test = Dataset(test_x, test_y, k, "test", mean.copy(), std.copy(), "synthetic")
    return train, test
