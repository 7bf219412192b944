"""
Entropy numerics: softmax, normalized entropy, the magnitude map, cross-entropy,
the entropy regularizer and closed-form gradients with respect to the logits.

Every function takes a single vector of shape (k,) or a batch of shape (n, k) and
works along the last axis. All arithmetic is float64; scalars come back as float.
"""
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from entaug.config import LossConfig, SignMode
from entaug.exceptions import InvalidInputError

# Entries at or below this contribute 0 to sum(p log p) and floor every log
LOG_FLOOR = 1e-12
PROB_SUM_TOL = 1e-9

ArrayLike = Union[np.ndarray, Sequence[float], Sequence[Sequence[float]]]
Labels = Union[int, Sequence[int], np.ndarray]


def _scalar(x: np.ndarray) -> Union[float, np.ndarray]:
    return float(x) if np.ndim(x) == 0 else x


def _check_shape(a: np.ndarray, what: str):
    if a.ndim not in (1, 2):
        raise InvalidInputError(f"{what} must be a vector or a batch of vectors, got shape {a.shape}")
    if a.shape[-1] < 2:
        raise InvalidInputError(f"{what} needs k >= 2 classes, got k={a.shape[-1]}")


def as_logits(logits: ArrayLike) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    _check_shape(z, "logits")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite (no NaN/Inf)")
    return z


def check_probs(probs: ArrayLike) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    _check_shape(p, "probabilities")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidInputError("probabilities must be finite and non-negative")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > PROB_SUM_TOL):
        raise InvalidInputError("probabilities must sum to 1")
    return p


def _check_labels(labels: Labels, z: np.ndarray) -> np.ndarray:
    y = np.asarray(labels)
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidInputError("labels must be integer class indices")
    expected = () if z.ndim == 1 else (z.shape[0],)
    if y.shape != expected:
        raise InvalidInputError(f"labels shape {y.shape} does not match logits {z.shape}")
    k = z.shape[-1]
    if np.any(y < 0) or np.any(y >= k):
        raise InvalidInputError(f"label out of range for k={k}")
    return y.astype(np.int64)


def softmax(logits: ArrayLike) -> np.ndarray:
    z = as_logits(logits)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: ArrayLike) -> np.ndarray:
    z = as_logits(logits)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _sum_p_log_p(p: np.ndarray) -> np.ndarray:
    live = p > LOG_FLOOR
    return np.where(live, p * np.log(np.where(live, p, 1.0)), 0.0).sum(axis=-1)


def normalized_entropy(probs: ArrayLike) -> Union[float, np.ndarray]:
    """Shannon entropy divided by log k, in [0, 1]."""
    p = check_probs(probs)
    h = -_sum_p_log_p(p) / np.log(p.shape[-1])
    return _scalar(np.clip(h, 0.0, 1.0))


def magnitude(probs: ArrayLike) -> Union[float, np.ndarray]:
    """1 + sum(p log p) / log k, i.e. one minus the normalized entropy."""
    return _scalar(np.clip(1.0 - np.asarray(normalized_entropy(probs)), 0.0, 1.0))


def entropy_and_magnitude(probs: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    h = np.asarray(normalized_entropy(probs), dtype=np.float64)
    return h, np.clip(1.0 - h, 0.0, 1.0)


def ent_loss(probs: ArrayLike, cfg: LossConfig) -> Union[float, np.ndarray]:
    p = check_probs(probs)
    s = _sum_p_log_p(p) / np.log(p.shape[-1])
    if cfg.sign_mode == SignMode.NEGATIVE_ENTROPY:
        return _scalar(s)
    return _scalar(-s)


def cross_entropy(logits: ArrayLike, label: Labels) -> Union[float, np.ndarray]:
    """-log softmax(logits)[label], evaluated in log space."""
    z = as_logits(logits)
    y = _check_labels(label, z)
    logp = log_softmax(z)
    if z.ndim == 1:
        return float(-logp[y])
    return -logp[np.arange(z.shape[0]), y]


@dataclass
class LossTerms:
    loss: np.ndarray      # per-sample total loss
    ce: np.ndarray        # per-sample cross-entropy component
    grad: np.ndarray      # per-sample d(loss)/d(logits)
    probs: np.ndarray     # softmax outputs, reused by the entropy cache


def loss_terms(logits: ArrayLike, labels: Labels, cfg: LossConfig) -> LossTerms:
    z = as_logits(logits)
    y = _check_labels(labels, z)
    batch = np.atleast_2d(z)
    yb = np.atleast_1d(y)
    rows = np.arange(batch.shape[0])
    k = batch.shape[-1]

    logp = log_softmax(batch)
    p = np.exp(logp)
    ce = -logp[rows, yb]
    grad = p.copy()
    grad[rows, yb] -= 1.0
    loss = ce.copy()

    # lambda == 0 skips the term entirely so CE-only runs stay bit-identical
    if cfg.use_ent_loss and cfg.ent_lambda > 0:
        log_k = np.log(k)
        s = _sum_p_log_p(p)
        # d/dz_j sum_i p_i log p_i = p_j (log p_j - sum_i p_i log p_i)
        ds = p * (np.log(np.maximum(p, LOG_FLOOR)) - s[:, None])
        sign = 1.0 if cfg.sign_mode == SignMode.NEGATIVE_ENTROPY else -1.0
        loss = loss + cfg.ent_lambda * sign * s / log_k
        grad = grad + cfg.ent_lambda * sign * ds / log_k

    if z.ndim == 1:
        return LossTerms(loss[0], ce[0], grad[0], p[0])
    return LossTerms(loss, ce, grad, p)


def total_loss_and_grad(logits: ArrayLike, label: Labels, cfg: LossConfig) -> Tuple[float, np.ndarray]:
    """Cross-entropy plus the optional weighted entropy term, with its logit gradient."""
    z = as_logits(logits)
    if z.ndim != 1:
        raise InvalidInputError("total_loss_and_grad expects a single logit vector")
    terms = loss_terms(z, label, cfg)
    return float(terms.loss), terms.grad
