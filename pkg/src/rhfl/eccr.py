"""Client confidence re-weighting.

A client's confidence is the product of its label quality (inverse mean SL
loss on its own private set) and its learning efficiency (exponentiated loss
drop, penalized by the per-parameter size of its last update).  Confidences
are turned into collaboration weights that sum to one.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import UsageError

logger = logging.getLogger(__name__)

LOSS_FLOOR = 1e-8
EXPONENT_CLAMP = 50.0


@dataclass(frozen=True)
class ClientRoundStats:
    mean_sl_loss: float
    prev_mean_sl_loss: float
    param_delta: float
    param_count: int

    def __post_init__(self):
        for name in ("mean_sl_loss", "prev_mean_sl_loss", "param_delta"):
            if not math.isfinite(getattr(self, name)):
                raise UsageError(f"{name} must be finite, got {getattr(self, name)}")
        if self.param_count < 1:
            raise UsageError(f"param_count must be >= 1, got {self.param_count}")
        if self.param_delta < 0:
            raise UsageError(f"param_delta must be >= 0, got {self.param_delta}")


@dataclass
class RoundWeights:
    raw: list[float]
    normalized: list[float]
    confidence_gain: float
    flags: list[str] = field(default_factory=list)


def label_quality(mean_sl_loss: float) -> tuple[float, bool]:
    """Return ``(1 / loss, clamped)``; losses at or below 1e-8 use the floor."""
    if mean_sl_loss <= LOSS_FLOOR:
        logger.warning("mean SL loss %.3g at or below floor; quality clamped", mean_sl_loss)
        return 1.0 / LOSS_FLOOR, True
    return 1.0 / mean_sl_loss, False


def learning_efficiency(stats: ClientRoundStats) -> tuple[float, bool]:
    """Return ``(exp(loss drop - delta / |params|), clamped)``."""
    exponent = (stats.prev_mean_sl_loss - stats.mean_sl_loss) - stats.param_delta / stats.param_count
    if abs(exponent) > EXPONENT_CLAMP:
        logger.warning("efficiency exponent %.3g clamped to +-%g", exponent, EXPONENT_CLAMP)
        return math.exp(math.copysign(EXPONENT_CLAMP, exponent)), True
    return math.exp(exponent), False


def client_confidence(quality: float, efficiency: float) -> float:
    if quality < 0 or efficiency < 0:
        raise UsageError(f"quality and efficiency must be >= 0, got {quality}, {efficiency}")
    return quality * efficiency


def client_weights(confidences: Sequence[float], confidence_gain: float, clients: int | None = None) -> RoundWeights:
    """Raw weights ``1/(K-1) + gain * F_k / sum(F)`` and their normalization."""
    conf = np.asarray(confidences, dtype=np.float64)
    k = len(conf) if clients is None else clients
    if k != len(conf):
        raise UsageError(f"expected {k} confidences, got {len(conf)}")
    if k < 2:
        raise UsageError(f"re-weighting needs at least 2 clients, got {k}")
    if confidence_gain < 0:
        raise UsageError(f"confidence_gain must be >= 0, got {confidence_gain}")
    if np.any(conf < 0) or not np.all(np.isfinite(conf)):
        raise UsageError(f"confidences must be finite and >= 0, got {conf.tolist()}")
    total = float(conf.sum())
    if total <= 0:
        logger.warning("all client confidences are zero; using uniform weights")
        raw = [1.0 / (k - 1)] * k
        return RoundWeights(raw, [1.0 / k] * k, confidence_gain, ["zero-confidence-fallback"])
    raw_arr = 1.0 / (k - 1) + confidence_gain * (conf / total)
    if np.all(raw_arr == raw_arr[0]):
        # exact symmetry: avoid rounding drift away from 1/K
        normalized = [1.0 / k] * k
    else:
        normalized = (raw_arr / raw_arr.sum()).tolist()
    return RoundWeights(raw_arr.tolist(), normalized, confidence_gain)


def round_weights(stats: Sequence[ClientRoundStats], confidence_gain: float) -> tuple[list[float], RoundWeights]:
    """Confidences and weights for one round from per-client statistics."""
    confidences, flags = [], []
    for i, s in enumerate(stats):
        q, q_clamped = label_quality(s.mean_sl_loss)
        p, p_clamped = learning_efficiency(s)
        if q_clamped:
            flags.append(f"client{i}:quality-floor")
        if p_clamped:
            flags.append(f"client{i}:efficiency-clamp")
        confidences.append(client_confidence(q, p))
    weights = client_weights(confidences, confidence_gain)
    weights.flags = flags + weights.flags
    return confidences, weights
