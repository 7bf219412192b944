"""
Trainer: the epoch loop with adaptive augmentation.

Per batch: baseline crop/flip -> sampled operation at the per-sample magnitude ->
normalize -> forward -> CE (+ entropy term) -> backward -> SGD step -> cache update.
Per epoch: test accuracy, a RunRecord, the rolling checkpoint and metrics.csv.
"""
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from entaug import __version__
from entaug.augmentation.augmenter import BatchAugmenter
from entaug.augmentation.cache import EntropyCache
from entaug.config import AugmentationMode, EntropySource, RunConfig, resolve_data_dir
from entaug.evaluation.export import export, load_records
from entaug.evaluation.metrics import (
    RunRecord, dataset_accuracy, empirical_ce, feature_dunn_index,
)
from entaug.exceptions import ConfigurationError, EntAugError
from entaug.ingestion.loader import Dataset, DatasetLoader
from entaug.ingestion.preprocessing import normalize, subset
from entaug.ingestion.synthetic import make_synthetic
from entaug.model.network import Network, build_network
from entaug.model.optimizer import SGD
from entaug.numerics.entropy import loss_terms
from entaug.training.checkpoint import (
    CHECKPOINT_NAME, FINAL_CHECKPOINT_NAME, load_checkpoint, save_checkpoint,
)

logger = logging.getLogger(__name__)

METRICS_NAME = "metrics.csv"
SUMMARY_NAME = "summary.json"
METADATA_NAME = "run_metadata.json"

# Reference training setup the desk defaults scale down from
REFERENCE_SCALE = {"epochs": 300, "batch_size": 256, "lr0": 0.1}

ENTROPY_PROVENANCE = {
    EntropySource.CACHED: "softmax of the sample's most recent training forward pass "
                          "(previous epoch, augmented input); all magnitudes are 0 in epoch 0",
    EntropySource.FRESH: "eval-mode forward pass on the clean normalized sample, once per batch",
}


@dataclass
class TrainResult:
    records: List[RunRecord]
    network: Network
    cache: EntropyCache
    checkpoint_path: str
    final_checkpoint_path: str
    summary: Dict[str, Any]
    samples_per_epoch: List[int] = field(default_factory=list)


def load_datasets(cfg: RunConfig) -> Tuple[Dataset, Dataset]:
    """Train/test splits for `cfg`, with the stratified subset applied to the train split."""
    if cfg.dataset == "synthetic":
        n_test = max(cfg.synthetic_samples // 4, 2 * cfg.synthetic_classes)
        return make_synthetic(cfg.synthetic_samples, n_test, k=cfg.synthetic_classes,
                              size=cfg.synthetic_image_size, seed=cfg.seed)
    train_set, test_set = DatasetLoader(resolve_data_dir(cfg.data_dir)).load(cfg.dataset)
    if cfg.subset_size is not None and cfg.subset_size != len(train_set):
        if cfg.subset_size > len(train_set):
            raise ConfigurationError(
                f"subset_size={cfg.subset_size} exceeds the {len(train_set)} training samples")
        train_set = subset(train_set, cfg.subset_size, cfg.seed)
        logger.info(f"Using a stratified subset of {len(train_set)} training samples")
    return train_set, test_set


class Trainer:
    def __init__(self, cfg: RunConfig, datasets: Optional[Tuple[Dataset, Dataset]] = None):
        self.cfg = cfg
        self.train_set, self.test_set = datasets if datasets is not None else load_datasets(cfg)
        if self.train_set.image_shape != self.test_set.image_shape:
            raise ConfigurationError("train and test images differ in shape")
        self.net = build_network(cfg.arch, self.train_set.image_shape, self.train_set.k,
                                 cfg.hidden_dim, seed=cfg.seed)
        self.optimizer = SGD(self.net, cfg.optimizer)
        self.cache = EntropyCache(len(self.train_set))
        self.augmenter = BatchAugmenter(
            self.cache, cfg.aug_mode, cfg.entropy_source, self.net,
            mean=self.train_set.mean, std=self.train_set.std,
            padding=cfg.padding, baseline_flip=cfg.baseline_flip, fill=cfg.fill,
            workers=cfg.workers,
        )
        self.records: List[RunRecord] = []
        self.samples_per_epoch: List[int] = []
        self.start_epoch = 0
        self.checkpoint_path = os.path.join(cfg.output_dir, CHECKPOINT_NAME)
        self.final_checkpoint_path = os.path.join(cfg.output_dir, FINAL_CHECKPOINT_NAME)
        self.metrics_path = os.path.join(cfg.output_dir, METRICS_NAME)
        if cfg.resume:
            self._resume()

    def _resume(self):
        if not os.path.isfile(self.checkpoint_path):
            logger.info(f"No checkpoint at {self.checkpoint_path}; starting from epoch 0")
            return
        ckpt = load_checkpoint(self.checkpoint_path)
        for key in ("dataset", "arch", "seed", "subset_size", "hidden_dim"):
            if getattr(ckpt.config, key) != getattr(self.cfg, key):
                raise ConfigurationError(f"cannot resume: checkpoint has a different '{key}'")
        ckpt.restore(self.net, self.optimizer)
        if ckpt.cache is None or len(ckpt.cache) != len(self.cache):
            raise ConfigurationError("cannot resume: checkpoint entropy cache does not match the dataset")
        for name, values in ckpt.cache.to_arrays().items():
            getattr(self.cache, name)[:] = values
        self.start_epoch = ckpt.epoch + 1
        if os.path.isfile(self.metrics_path):
            self.records = [r for r in load_records(self.metrics_path) if r.epoch < self.start_epoch]
        logger.info(f"Resumed from {self.checkpoint_path} at epoch {self.start_epoch}")

    def train_epoch(self, epoch: int) -> RunRecord:
        cfg, data = self.cfg, self.train_set
        started = time.perf_counter()
        # Entropy statistics describe the magnitudes this epoch reads
        mean_entropy = self.cache.mean_norm_entropy()
        mean_mag = self.cache.mean_magnitude()

        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(data))
        loss_sum = ce_sum = 0.0
        seen = 0
        batches = range(0, len(data), cfg.batch_size)
        for start in tqdm(batches, desc=f"epoch {epoch}", leave=False, disable=not cfg.progress):
            idx = order[start:start + cfg.batch_size]
            batch = [(data.images[i], int(data.labels[i]), int(i)) for i in idx]
            augmented = self.augmenter.augment_batch(batch, cfg.seed, epoch)

            trace = self.net.forward(normalize(np.stack(augmented), data.mean, data.std), mode="train")
            terms = loss_terms(trace.logits, data.labels[idx], cfg.loss)
            grads = self.net.backward(trace, terms.grad / len(idx))
            lr = self.optimizer.step(grads, epoch)
            self.cache.update_batch(idx, terms.probs, epoch)

            loss_sum += float(terms.loss.sum())
            ce_sum += float(terms.ce.sum())
            seen += len(idx)
            logger.debug(f"epoch {epoch} batch {start // cfg.batch_size}: loss={terms.loss.mean():.4f} lr={lr:.5f}")
        self.samples_per_epoch.append(seen)

        record = RunRecord(
            epoch=epoch,
            train_loss=loss_sum / seen,
            train_ce=ce_sum / seen,
            test_accuracy=dataset_accuracy(self.net, self.test_set),
            mean_norm_entropy=mean_entropy,
            mean_magnitude=mean_mag,
            epoch_wall_seconds=round(time.perf_counter() - started, 3) if cfg.record_timing else 0.0,
        )
        logger.info(
            f"Epoch {epoch}: loss={record.train_loss:.4f} ce={record.train_ce:.4f} "
            f"acc={record.test_accuracy:.4f} H={record.mean_norm_entropy:.4f} m={record.mean_magnitude:.4f}"
        )
        return record

    def summarize(self) -> Dict[str, Any]:
        try:
            dunn: Optional[float] = feature_dunn_index(self.net, self.test_set)
        except EntAugError as e:
            logger.warning(f"Dunn index unavailable: {e}")
            dunn = None
        return {
            "epochs_completed": len(self.records),
            "final_test_accuracy": dataset_accuracy(self.net, self.test_set),
            "final_train_empirical_ce": empirical_ce(self.net, self.train_set),
            "final_mean_norm_entropy": self.cache.mean_norm_entropy(),
            "final_mean_magnitude": self.cache.mean_magnitude(),
            "test_dunn_index": dunn,
        }

    def metadata(self) -> Dict[str, Any]:
        cfg = self.cfg
        flat = cfg.to_flat()
        deviations = [
            f"{key}={flat[key]} (reference setup: {value})"
            for key, value in REFERENCE_SCALE.items() if flat[key] != value
        ]
        deviations.append(f"architecture {cfg.arch} instead of ResNet/WRN-scale networks")
        if cfg.dataset in ("mnist", "synthetic"):
            deviations.append(f"dataset {cfg.dataset} is not part of the reference benchmarks")
        return {
            "version": __version__,
            "config": flat,
            "train_samples": len(self.train_set),
            "test_samples": len(self.test_set),
            "classes": self.train_set.k,
            "entropy_provenance": (ENTROPY_PROVENANCE[cfg.entropy_source]
                                   if cfg.aug_mode == AugmentationMode.ENTAUGMENT else None),
            "deviations": deviations,
        }

    def _write_json(self, name: str, payload: Dict[str, Any]):
        with open(os.path.join(self.cfg.output_dir, name), "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)

    def run(self) -> TrainResult:
        cfg = self.cfg
        os.makedirs(cfg.output_dir, exist_ok=True)
        self._write_json(METADATA_NAME, self.metadata())
        logger.info(
            f"Training {cfg.arch} on {cfg.dataset} ({len(self.train_set)} samples) for {cfg.epochs} epochs, "
            f"aug={cfg.aug_mode.value}, ent_loss={cfg.loss.use_ent_loss}"
        )
        for epoch in range(self.start_epoch, cfg.epochs):
            self.records.append(self.train_epoch(epoch))
            save_checkpoint(self.checkpoint_path, cfg, epoch, self.net, self.optimizer, self.cache)
            export(self.records, self.metrics_path, "csv")

        last_epoch = self.records[-1].epoch if self.records else -1
        save_checkpoint(self.final_checkpoint_path, cfg, last_epoch, self.net, self.optimizer, self.cache,
                        read_only=True)
        summary = self.summarize()
        self._write_json(SUMMARY_NAME, summary)
        logger.info(f"Finished: test accuracy {summary['final_test_accuracy']:.4f}, outputs in {cfg.output_dir}")
        return TrainResult(
            records=list(self.records),
            network=self.net,
            cache=self.cache,
            checkpoint_path=self.checkpoint_path,
            final_checkpoint_path=self.final_checkpoint_path,
            summary=summary,
            samples_per_epoch=list(self.samples_per_epoch),
        )


def train(cfg: RunConfig, datasets: Optional[Tuple[Dataset, Dataset]] = None) -> TrainResult:
    return Trainer(cfg, datasets).run()
