"""
Metrics: accuracy, the Dunn index, empirical cross-entropy and per-epoch run records.
"""
import logging
from dataclasses import dataclass, fields
from typing import Iterator, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from entaug.exceptions import InvalidInputError, UndefinedValueError
from entaug.ingestion.loader import Dataset
from entaug.ingestion.preprocessing import normalize
from entaug.model.network import Network
from entaug.numerics.entropy import as_logits, cross_entropy

logger = logging.getLogger(__name__)

EVAL_BATCH = 500
LINKAGES = ("single", "centroid")


@dataclass
class RunRecord:
    epoch: int
    train_loss: float
    train_ce: float
    test_accuracy: float
    mean_norm_entropy: float
    mean_magnitude: float
    epoch_wall_seconds: float


RECORD_FIELDS: Tuple[str, ...] = tuple(f.name for f in fields(RunRecord))


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax equals the label (ties go to the lowest class)."""
    z = np.atleast_2d(as_logits(logits))
    y = np.asarray(labels).reshape(-1)
    if z.shape[0] != y.shape[0]:
        raise InvalidInputError(f"{z.shape[0]} logit rows for {y.shape[0]} labels")
    if y.shape[0] == 0:
        raise InvalidInputError("accuracy of an empty batch is undefined")
    return float(np.mean(np.argmax(z, axis=1) == y))


def dunn_index(features: np.ndarray, labels: np.ndarray, linkage: str = "single") -> float:
    """min inter-cluster distance / max mean intra-cluster pairwise distance.

    linkage="single" measures clusters by their closest members, "centroid" by centroids.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InvalidInputError(f"features {x.shape} do not match {y.shape[0]} labels")
    if linkage not in LINKAGES:
        raise InvalidInputError(f"linkage must be one of {LINKAGES}")
    clusters = [x[y == c] for c in np.unique(y)]
    if len(clusters) < 2:
        raise InvalidInputError("the Dunn index needs at least two clusters")
    if min(len(c) for c in clusters) < 2:
        raise InvalidInputError("every cluster needs at least two points")

    spread = max(float(pdist(c).mean()) for c in clusters)
    if linkage == "centroid":
        centroids = np.stack([c.mean(axis=0) for c in clusters])
        separation = float(pdist(centroids).min())
    else:
        separation = min(
            float(cdist(clusters[i], clusters[j]).min())
            for i in range(len(clusters)) for j in range(i + 1, len(clusters))
        )

    if spread == 0.0:
        if separation == 0.0:
            raise UndefinedValueError("Dunn index undefined: zero spread and zero separation")
        logger.warning("Every cluster collapsed to a point; Dunn index is infinite")
        return float("inf")
    return separation / spread


def _eval_batches(net: Network, ds: Dataset, batch_size: int) -> Iterator[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    for start in range(0, len(ds), batch_size):
        stop = start + batch_size
        trace = net.forward(normalize(ds.images[start:stop], ds.mean, ds.std), mode="eval")
        yield trace.logits, trace.penultimate, ds.labels[start:stop]


def evaluate_dataset(net: Network, ds: Dataset, batch_size: int = EVAL_BATCH) -> Tuple[float, float]:
    """(accuracy, empirical cross-entropy) from one eval-mode pass."""
    if len(ds) == 0:
        raise InvalidInputError(f"{ds.split} split is empty")
    correct, losses = 0, []
    for logits, _, labels in _eval_batches(net, ds, batch_size):
        correct += int(np.sum(np.argmax(logits, axis=1) == labels))
        losses.append(cross_entropy(logits, labels))
    return correct / len(ds), float(np.concatenate(losses).mean())


def empirical_ce(net: Network, ds: Dataset, batch_size: int = EVAL_BATCH) -> float:
    """Mean cross-entropy over the dataset; the KL proxy up to the data-entropy constant."""
    return evaluate_dataset(net, ds, batch_size)[1]


def dataset_accuracy(net: Network, ds: Dataset, batch_size: int = EVAL_BATCH) -> float:
    return evaluate_dataset(net, ds, batch_size)[0]


def penultimate_features(net: Network, ds: Dataset, batch_size: int = EVAL_BATCH) -> Tuple[np.ndarray, np.ndarray]:
    feats, labels = [], []
    for _, penultimate, y in _eval_batches(net, ds, batch_size):
        feats.append(penultimate)
        labels.append(y)
    return np.concatenate(feats), np.concatenate(labels)


def feature_dunn_index(net: Network, ds: Dataset, linkage: str = "single",
                       batch_size: int = EVAL_BATCH) -> float:
    features, labels = penultimate_features(net, ds, batch_size)
    return dunn_index(features, labels, linkage)
