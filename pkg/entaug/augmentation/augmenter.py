"""
Augmenter: per-sample adaptive augmentation of a training batch.

For every sample: baseline crop+flip, then one operation drawn uniformly from the
augmentation space, applied at that sample's own magnitude.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from entaug.augmentation.cache import EntropyCache
from entaug.augmentation.transforms import (
    DEFAULT_FILL, TRANSFORM_REGISTRY, AugRng, TransformKind, apply, preview_filename, sample_transform,
    save_ppm,
)
from entaug.config import AugmentationMode, EntropySource
from entaug.exceptions import ConfigurationError
from entaug.ingestion.loader import Dataset
from entaug.ingestion.preprocessing import baseline_augment, normalize
from entaug.model.network import Network
from entaug.numerics.entropy import magnitude, softmax

logger = logging.getLogger(__name__)

BatchItem = Tuple[np.ndarray, int, int]  # (image, label, sample_index)


class BatchAugmenter:
    def __init__(
        self,
        cache: Optional[EntropyCache],
        mode: AugmentationMode = AugmentationMode.ENTAUGMENT,
        source: EntropySource = EntropySource.CACHED,
        model: Optional[Network] = None,
        mean: Optional[np.ndarray] = None,
        std: Optional[np.ndarray] = None,
        padding: str = "zero",
        baseline_flip: bool = True,
        fill: int = DEFAULT_FILL,
        workers: int = 1,
        space: Optional[Sequence[TransformKind]] = None,
    ):
        adaptive = mode == AugmentationMode.ENTAUGMENT
        if adaptive and cache is None:
            raise ConfigurationError("entaugment mode needs an entropy cache")
        if adaptive and source == EntropySource.FRESH:
            if model is None:
                raise ConfigurationError("fresh-forward entropy needs a model")
            if mean is None or std is None:
                raise ConfigurationError("fresh-forward entropy needs normalization statistics")
        self.cache = cache
        self.mode = mode
        self.source = source
        self.model = model
        self.mean, self.std = mean, std
        self.padding = padding
        self.baseline_flip = baseline_flip
        self.fill = fill
        self.workers = workers
        self.space = tuple(space) if space else None
        self.model_evaluations = 0
        self.last_magnitudes = np.zeros(0)
        self.last_kinds: List[Optional[TransformKind]] = []

    def _adaptive_magnitudes(self, images: List[np.ndarray], indices: List[int]) -> np.ndarray:
        if self.source == EntropySource.CACHED:
            return self.cache.magnitudes(indices)
        # clean images, inference mode: no parameter or statistics updates
        trace = self.model.forward(normalize(np.stack(images), self.mean, self.std), mode="eval")
        self.model_evaluations += 1
        return np.atleast_1d(magnitude(softmax(trace.logits)))

    def _augment_one(self, img: np.ndarray, sample_index: int, m: Optional[float],
                     rng_seed: int, epoch: int) -> Tuple[np.ndarray, Optional[TransformKind], float]:
        rng = AugRng(rng_seed, epoch, sample_index)
        if self.mode == AugmentationMode.NONE:
            return img.copy(), None, 0.0
        x = baseline_augment(img, rng, padding=self.padding, flip=self.baseline_flip)
        if self.mode == AugmentationMode.BASELINE_ONLY:
            return x, None, 0.0
        kind = sample_transform(rng, self.space)
        if m is None:
            m = rng.uniform()
        return apply(TRANSFORM_REGISTRY[kind], x, float(m), rng, self.fill), kind, float(m)

    def augment_batch(self, batch: Sequence[BatchItem], rng_seed: int, epoch: int) -> List[np.ndarray]:
        images = [item[0] for item in batch]
        indices = [int(item[2]) for item in batch]
        if self.mode == AugmentationMode.ENTAUGMENT:
            mags: List[Optional[float]] = list(self._adaptive_magnitudes(images, indices))
        else:
            mags = [None] * len(batch)

        jobs = list(zip(images, indices, mags))
        if self.workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(lambda job: self._augment_one(*job, rng_seed, epoch), jobs))
        else:
            results = [self._augment_one(*job, rng_seed, epoch) for job in jobs]

        self.last_kinds = [kind for _, kind, _ in results]
        self.last_magnitudes = np.array([m for _, _, m in results], dtype=np.float64)
        return [out for out, _, _ in results]


def augment_batch(batch: Sequence[BatchItem], cache: EntropyCache,
                  source: EntropySource = EntropySource.CACHED, model: Optional[Network] = None,
                  rng_seed: int = 0, epoch: int = 0, **options) -> List[np.ndarray]:
    augmenter = BatchAugmenter(cache, AugmentationMode.ENTAUGMENT, source, model, **options)
    return augmenter.augment_batch(batch, rng_seed, epoch)


def write_previews(ds: Dataset, out_dir: str, count: int = 8, seed: int = 0,
                   kind: Optional[TransformKind] = None, magnitude_value: Optional[float] = None,
                   fill: int = DEFAULT_FILL) -> List[str]:
    """Dump the first `count` images of `ds` after one sampled operation each, as PPM files."""
    if count < 1:
        raise ConfigurationError("preview count must be >= 1")
    paths = []
    for index in range(min(count, len(ds))):
        rng = AugRng(seed, 0, index)
        chosen = kind or sample_transform(rng)
        m = rng.uniform() if magnitude_value is None else float(magnitude_value)
        out = apply(TRANSFORM_REGISTRY[chosen], ds.images[index], m, rng, fill)
        path = os.path.join(out_dir, preview_filename(ds.split, index, chosen, m))
        save_ppm(out, path)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} previews to {out_dir}")
    return paths
