"""Central finite differences, used as the independent oracle for autodiff."""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, UsageError


def finite_difference_gradient(
    loss_fn: Callable[[Sequence[np.ndarray]], float],
    params: Sequence[np.ndarray],
    h: float = 1e-5,
) -> list[np.ndarray]:
    """Estimate d loss / d params coordinate by coordinate.

    ``loss_fn`` receives the (perturbed) list of arrays and returns a float.  The
    arrays are perturbed in place and restored afterwards.
    """
    if not h > 0:
        raise UsageError(f"step h must be positive, got {h}")
    params = [np.asarray(p, dtype=np.float64) for p in params]
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn(params))
            flat[i] = orig - h
            down = float(loss_fn(params))
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NumericError(f"non-finite loss at perturbed coordinate {i}")
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(a: Sequence[np.ndarray], b: Sequence[np.ndarray], floor: float = 1e-8) -> float:
    """Largest |a-b| / max(|a|, |b|, floor) over all coordinates."""
    worst = 0.0
    for x, y in zip(a, b):
        x, y = np.asarray(x), np.asarray(y)
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        if x.size:
            worst = max(worst, float(np.max(np.abs(x - y) / denom)))
    return worst
