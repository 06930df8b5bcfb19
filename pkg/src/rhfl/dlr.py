"""Dynamic label refinement: blend given labels with model predictions.

The blend weight grows with the number of completed collaborative rounds,
``t / (scale * total_rounds + t)``, so it starts at 0 and never reaches 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, UsageError


@dataclass(frozen=True)
class DlrSchedule:
    schedule_scale: float = 10.0
    total_rounds: int = 40

    def __post_init__(self):
        if not self.schedule_scale > 0:
            raise ConfigError(f"schedule_scale must be > 0, got {self.schedule_scale}")
        if self.total_rounds < 1:
            raise ConfigError(f"total_rounds must be >= 1, got {self.total_rounds}")


def dlr_weight(completed_rounds: int, schedule: DlrSchedule) -> float:
    if not 0 <= completed_rounds <= schedule.total_rounds:
        raise UsageError(f"round index {completed_rounds} outside [0, {schedule.total_rounds}]")
    t = float(completed_rounds)
    return t / (schedule.schedule_scale * schedule.total_rounds + t)


def refine_labels(given: np.ndarray, predictions: np.ndarray, weight: float) -> np.ndarray:
    """Per-row convex combination ``(1 - weight) * given + weight * predictions``.

    ``predictions`` must already be detached probabilities; the result is a
    training target, not something to differentiate through.
    """
    if not 0.0 <= weight < 1.0:
        raise UsageError(f"refinement weight must lie in [0, 1), got {weight}")
    given = np.asarray(given, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if given.shape != predictions.shape:
        raise DimensionError(f"labels {given.shape} and predictions {predictions.shape} differ in shape")
    if weight == 0.0:
        return given.copy()
    return (1.0 - weight) * given + weight * predictions
