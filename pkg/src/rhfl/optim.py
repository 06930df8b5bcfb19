"""Adam optimizer over lists of tensors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, UsageError
from .tensor import Tensor


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], learning_rate: float = 0.001, **kw) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            first_moment=[np.zeros(p.shape) for p in params],
            second_moment=[np.zeros(p.shape) for p in params],
            **kw,
        )


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState) -> None:
    """Apply one Adam update to ``params`` in place and advance ``state``."""
    if len(grads) != len(params):
        raise UsageError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.first_moment:
        state.first_moment = [np.zeros(p.shape) for p in params]
        state.second_moment = [np.zeros(p.shape) for p in params]
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            raise UsageError(f"missing gradient for parameter {i}")
        if g.shape != p.shape or state.first_moment[i].shape != p.shape:
            raise DimensionError(f"parameter {i}: shape {p.shape}, gradient {g.shape}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        # zero-gradient coordinates with zero moments stay exactly put
        p.data -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
