"""
Throughput benchmark of the augmentation stage alone, per magnitude source.
"""
import logging
import os
import time
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from entaug.augmentation.augmenter import BatchAugmenter
from entaug.augmentation.cache import EntropyCache
from entaug.config import AugmentationMode, EntropySource, RunConfig
from entaug.exceptions import InvalidInputError
from entaug.ingestion.loader import Dataset
from entaug.model.network import build_network
from entaug.training.trainer import load_datasets

logger = logging.getLogger(__name__)

MIN_BATCHES = 10
BENCH_MODES: Tuple[Tuple[str, AugmentationMode, EntropySource], ...] = (
    ("random_magnitude", AugmentationMode.RANDOM_MAGNITUDE, EntropySource.CACHED),
    ("entaugment_cached", AugmentationMode.ENTAUGMENT, EntropySource.CACHED),
    ("entaugment_fresh", AugmentationMode.ENTAUGMENT, EntropySource.FRESH),
)


def bench_throughput(cfg: RunConfig, n_batches: int, warmup: int = 2,
                     datasets: Optional[Tuple[Dataset, Dataset]] = None,
                     output_dir: Optional[str] = None) -> pd.DataFrame:
    """Mean and p95 per-batch augmentation time; warmup batches are not timed."""
    if n_batches < MIN_BATCHES:
        raise InvalidInputError(f"n_batches must be >= {MIN_BATCHES}, got {n_batches}")
    if warmup < 0:
        raise InvalidInputError("warmup must be >= 0")
    train_set, _ = datasets if datasets is not None else load_datasets(cfg)
    net = build_network(cfg.arch, train_set.image_shape, train_set.k, cfg.hidden_dim, seed=cfg.seed)

    # Non-trivial cached magnitudes so every mode exercises the magnitude-dependent paths
    rng = np.random.default_rng(cfg.seed)
    cache = EntropyCache(len(train_set))
    cache.update_batch(np.arange(len(train_set)), rng.dirichlet(np.ones(train_set.k), size=len(train_set)), 0)
    order = rng.permutation(len(train_set))

    rows = []
    for name, mode, source in BENCH_MODES:
        augmenter = BatchAugmenter(
            cache, mode, source, net, mean=train_set.mean, std=train_set.std,
            padding=cfg.padding, baseline_flip=cfg.baseline_flip, fill=cfg.fill, workers=cfg.workers,
        )
        times: List[float] = []
        for b in range(warmup + n_batches):
            if b == warmup:
                augmenter.model_evaluations = 0
            idx = np.take(order, range(b * cfg.batch_size, (b + 1) * cfg.batch_size), mode="wrap")
            batch = [(train_set.images[i], int(train_set.labels[i]), int(i)) for i in idx]
            started = time.perf_counter()
            augmenter.augment_batch(batch, cfg.seed, 1)
            if b >= warmup:
                times.append(time.perf_counter() - started)
        seconds = np.asarray(times)
        rows.append({
            "mode": name,
            "n_batches": n_batches,
            "batch_size": cfg.batch_size,
            "mean_seconds": float(seconds.mean()),
            "p95_seconds": float(np.percentile(seconds, 95)),
            "model_evaluations": augmenter.model_evaluations,
        })
        logger.info(f"{name}: mean {seconds.mean() * 1000:.2f} ms/batch, "
                    f"p95 {np.percentile(seconds, 95) * 1000:.2f} ms, evals={augmenter.model_evaluations}")

    report = pd.DataFrame(rows).set_index("mode")
    ratio = report.loc["entaugment_cached", "mean_seconds"] / report.loc["random_magnitude", "mean_seconds"]
    logger.info(f"cached / random_magnitude time ratio: {ratio:.3f}")
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        report.to_csv(os.path.join(output_dir, "throughput.csv"))
    return report
