"""Probability transforms and losses: temperature softmax, CE, RCE, SL and KL.

Label distributions ``p`` are constants (numpy arrays); predictions ``q`` and
learner logits are tensors so gradients reach the model that produced them.
All per-sample losses are averaged over the batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, DistributionError, NumericError, UsageError
from .tensor import Tensor

PROB_FLOOR = 1e-12
ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LossConfig:
    ce_weight: float = 0.4
    rce_weight: float = 0.9
    temperature: float = 4.0
    rce_log_floor: float = -4.0

    def __post_init__(self):
        if self.ce_weight < 0 or self.rce_weight < 0 or self.ce_weight + self.rce_weight <= 0:
            raise ConfigError(
                f"ce_weight and rce_weight must be >= 0 with a positive sum, "
                f"got {self.ce_weight}, {self.rce_weight}"
            )
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if not self.rce_log_floor < 0:
            raise ConfigError(f"rce_log_floor must be < 0, got {self.rce_log_floor}")


def _const(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def check_distribution(p: np.ndarray, what: str = "label distribution") -> None:
    if p.ndim != 2:
        raise DimensionError(f"{what} must be [B x C], got shape {p.shape}")
    if np.any(p < -ROW_SUM_TOL):
        raise DistributionError(f"{what} has negative entries")
    worst = float(np.max(np.abs(p.sum(axis=1) - 1.0)))
    if worst > ROW_SUM_TOL:
        raise DistributionError(f"{what} rows do not sum to 1 (max deviation {worst:.3g})")


def one_hot(labels, classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def temperature_softmax(logits: Tensor, temperature: float = 1.0) -> Tensor:
    if not temperature > 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("non-finite logits passed to softmax")
    return T.softmax(logits, temperature)


softmax_np = T.softmax_rows


def _match(p: np.ndarray, q: Tensor) -> None:
    if p.shape != q.shape:
        raise DimensionError(f"label distribution {p.shape} and prediction {q.shape} differ in shape")


def cross_entropy(p, q: Tensor) -> Tensor:
    """Batch mean of -sum_k p_k log q_k, with q floored at 1e-12."""
    p = _const(p)
    _match(p, q)
    check_distribution(p)
    logq = T.log(T.clamp_min(q, PROB_FLOOR))
    return -T.mean(T.sum(logq * p, axis=1))


def clamped_log(p: np.ndarray, floor: float) -> np.ndarray:
    """log p with log 0 (and anything below ``floor``) replaced by ``floor``."""
    with np.errstate(divide="ignore"):
        logp = np.log(np.maximum(p, 0.0))
    return np.maximum(logp, floor)


def reverse_cross_entropy(p, q: Tensor, log_floor: float = -4.0) -> Tensor:
    """Batch mean of -sum_k q_k log p_k; p is a constant target."""
    if not log_floor < 0:
        raise ConfigError(f"rce log floor must be < 0, got {log_floor}")
    p = _const(p)
    _match(p, q)
    check_distribution(p)
    return -T.mean(T.sum(q * clamped_log(p, log_floor), axis=1))


def sl_loss(p, q: Tensor, config: LossConfig = LossConfig()) -> Tensor:
    ce = cross_entropy(p, q)
    rce = reverse_cross_entropy(p, q, config.rce_log_floor)
    return ce * config.ce_weight + rce * config.rce_weight


def sl_loss_np(p: np.ndarray, logits: np.ndarray, config: LossConfig) -> np.ndarray:
    """Per-sample SL loss on tempered logits, graph-free (for evaluation)."""
    q = softmax_np(logits, config.temperature)
    ce = -(p * np.log(np.maximum(q, PROB_FLOOR))).sum(axis=1)
    rce = -(q * clamped_log(p, config.rce_log_floor)).sum(axis=1)
    return config.ce_weight * ce + config.rce_weight * rce


def kl_divergence(target_logits, learner_logits: Tensor, temperature: float = 1.0) -> Tensor:
    """Batch mean of KL(softmax(target/t) || softmax(learner/t)).

    The target side is a constant; only the learner receives gradient.
    """
    z1 = _const(target_logits)
    learner_logits = learner_logits if isinstance(learner_logits, Tensor) else Tensor(learner_logits)
    if z1.shape != learner_logits.shape:
        raise DimensionError(f"logit shapes differ: {z1.shape} vs {learner_logits.shape}")
    if not (np.all(np.isfinite(z1)) and np.all(np.isfinite(learner_logits.data))):
        raise NumericError("non-finite logits passed to kl_divergence")
    s1 = softmax_np(z1, temperature)
    with np.errstate(divide="ignore"):
        log_s1 = np.log(s1)
    # 0 * log 0 = 0 for zero-probability target entries
    neg_entropy = float(np.where(s1 > 0, s1 * log_s1, 0.0).sum()) / z1.shape[0]
    return T.soft_target_cross_entropy(s1, learner_logits, temperature) + neg_entropy


def collab_kl_loss(
    own_logits: Tensor,
    others_logits: Sequence[np.ndarray],
    temperature: float = 1.0,
    scale: float = 1.0,
    source_weights: Sequence[float] | None = None,
) -> Tensor:
    """``scale * sum_j c_j * KL(others[j] || own)`` over the other clients.

    Without ``source_weights`` every c_j is 1.  With them, c_j is the source's
    weight renormalized over the others, times (K-1), so uniform weights reduce
    to the unweighted sum.
    """
    if len(others_logits) == 0:
        raise UsageError("collaborative loss needs at least one other client")
    if source_weights is not None:
        if len(source_weights) != len(others_logits):
            raise UsageError(f"{len(others_logits)} sources but {len(source_weights)} weights")
        w = np.asarray(source_weights, dtype=np.float64)
        coeffs = w / w.sum() * len(others_logits)
    else:
        coeffs = np.ones(len(others_logits))
    total = None
    for c, z in zip(coeffs, others_logits):
        term = kl_divergence(z, own_logits, temperature)
        if c != 1.0:
            term = term * float(c)
        total = term if total is None else total + term
    return total * scale if scale != 1.0 else total
