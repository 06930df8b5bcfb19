"""Heterogeneous MLP classifiers and parameter bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, UsageError
from .tensor import Tensor

# stand-ins for the four distinct backbones of the reference setup
DEFAULT_ROSTER: tuple[tuple[int, ...], ...] = ((32,), (48,), (64, 32), (96,))


@dataclass(frozen=True)
class ArchSpec:
    name: str
    hidden_layers: tuple[int, ...]
    input_dim: int
    output_dim: int
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        if not self.hidden_layers:
            raise ConfigError(f"{self.name}: at least one hidden layer is required")
        if any(int(w) < 1 for w in self.hidden_layers):
            raise ConfigError(f"{self.name}: hidden widths must be >= 1, got {list(self.hidden_layers)}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError(f"{self.name}: input/output dims must be >= 1")
        if self.activation != "relu":
            raise ConfigError(f"{self.name}: only relu activation is supported")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        widths = [self.input_dim, *self.hidden_layers, self.output_dim]
        return list(zip(widths[:-1], widths[1:]))


def default_specs(count: int, input_dim: int, output_dim: int, roster=DEFAULT_ROSTER) -> list[ArchSpec]:
    """``count`` specs cycling through ``roster``."""
    specs = []
    for k in range(count):
        hidden = tuple(roster[k % len(roster)])
        name = "mlp-" + "x".join(str(w) for w in hidden)
        specs.append(ArchSpec(name, hidden, input_dim, output_dim))
    return specs


@dataclass
class MLP:
    spec: ArchSpec
    weights: list[Tensor] = field(default_factory=list)
    biases: list[Tensor] = field(default_factory=list)

    @property
    def params(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim != 2 or x.shape[0] < 1:
            raise DimensionError(f"{self.spec.name}: expected a non-empty [B x D] batch, got {x.shape}")
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if h.shape[1] != w.shape[0]:
                raise DimensionError(
                    f"{self.spec.name} layer {i}: expects {w.shape[0]} input features, got {h.shape[1]}"
                )
            h = T.matmul(h, w) + b
            if i < last:
                h = T.relu(h)
        return h

    __call__ = forward

    def logits(self, x) -> np.ndarray:
        """Forward pass without recording a graph."""
        h = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if h.shape[1] != w.shape[0]:
                raise DimensionError(
                    f"{self.spec.name} layer {i}: expects {w.shape[0]} input features, got {h.shape[1]}"
                )
            h = h @ w.data + b.data
            if i < last:
                h = np.where(h > 0, h, 0.0)
        return h

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.params]

    def load(self, arrays: Sequence[np.ndarray]) -> None:
        params = self.params
        if len(arrays) != len(params):
            raise DimensionError(f"expected {len(params)} arrays, got {len(arrays)}")
        for p, a in zip(params, arrays):
            a = np.asarray(a, dtype=np.float64)
            if a.shape != p.shape:
                raise DimensionError(f"shape {a.shape} does not match parameter {p.shape}")
            p.data = a.copy()


def build_model(spec: ArchSpec, seed: int) -> MLP:
    """He-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    model = MLP(spec)
    for fan_in, fan_out in spec.layer_shapes:
        limit = np.sqrt(6.0 / fan_in)
        model.weights.append(Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True))
        model.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return model


def parameter_delta_norm(before: Sequence[np.ndarray], after: Sequence[np.ndarray]) -> float:
    """Euclidean norm of the concatenated parameter differences."""
    if len(before) != len(after):
        raise UsageError(f"parameter lists differ in length: {len(before)} vs {len(after)}")
    total = 0.0
    for a, b in zip(before, after):
        a = a.data if isinstance(a, Tensor) else np.asarray(a)
        b = b.data if isinstance(b, Tensor) else np.asarray(b)
        if a.shape != b.shape:
            raise UsageError(f"parameter shapes differ: {a.shape} vs {b.shape}")
        d = (b - a).ravel()
        total += float(d @ d)
    return float(np.sqrt(total))
