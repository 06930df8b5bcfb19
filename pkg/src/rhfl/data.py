"""Synthetic Gaussian-cluster datasets, client partitioning and label noise."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, PartitionError, UsageError

PAIRFLIP_MAX_RATE = 0.5
MAX_PARTITION_ATTEMPTS = 100


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ConfigError(f"features must be a non-empty [N x D] array, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ConfigError(f"{self.features.shape[0]} rows but {self.labels.shape} labels")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise ConfigError(f"labels must lie in [0, {self.classes})")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.classes)

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.features, labels, self.classes)


def cluster_means(classes: int, dim: int, seed: int) -> np.ndarray:
    """``classes`` points drawn uniformly on the unit sphere in R^dim."""
    if classes < 2 or dim < 2:
        raise ConfigError(f"need classes >= 2 and dim >= 2, got {classes}, {dim}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((classes, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_clusters(means: np.ndarray, per_class: int, spread: float, seed: int) -> Dataset:
    """``per_class`` isotropic Gaussian samples around every mean, class-major order."""
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}")
    if not spread > 0:
        raise ConfigError(f"spread must be > 0, got {spread}")
    rng = np.random.default_rng(seed)
    classes, dim = means.shape
    noise = rng.standard_normal((classes, per_class, dim))
    features = (means[:, None, :] + spread * noise).reshape(classes * per_class, dim)
    labels = np.repeat(np.arange(classes), per_class)
    return Dataset(features, labels, classes)


def generate_synthetic(classes: int, dim: int, per_class: int, spread: float, seed: int) -> Dataset:
    means = cluster_means(classes, dim, seed)
    return sample_clusters(means, per_class, spread, seed + 1)


def generate_public(classes: int, dim: int, size: int, spread: float, seed: int) -> Dataset:
    """Unlabeled-in-practice public set of ``size`` rows drawn round-robin over clusters."""
    if size < 1:
        raise ConfigError(f"public dataset size must be >= 1, got {size}")
    per_class = -(-size // classes)
    pool = generate_synthetic(classes, dim, per_class, spread, seed)
    order = np.random.default_rng(seed + 2).permutation(len(pool))[:size]
    return pool.subset(np.sort(order))


def partition_iid(size: int, clients: int, seed: int) -> list[np.ndarray]:
    if clients < 2:
        raise ConfigError(f"need at least 2 clients, got {clients}")
    perm = np.random.default_rng(seed).permutation(size)
    return [np.sort(part) for part in np.array_split(perm, clients)]


def partition_dirichlet(
    labels: np.ndarray, clients: int, beta: float, min_per_client: int = 20, seed: int = 0
) -> list[np.ndarray]:
    """Per class, split that class's samples across clients by Dirichlet(beta) shares."""
    if clients < 2:
        raise ConfigError(f"need at least 2 clients, got {clients}")
    if not beta > 0:
        raise ConfigError(f"Dirichlet concentration must be > 0, got {beta}")
    labels = np.asarray(labels)
    if min_per_client * clients > labels.size:
        raise PartitionError(f"{labels.size} samples cannot give {clients} clients {min_per_client} each")
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    for _ in range(MAX_PARTITION_ATTEMPTS):
        buckets: list[list[np.ndarray]] = [[] for _ in range(clients)]
        for c in classes:
            idx = np.flatnonzero(labels == c)
            rng.shuffle(idx)
            shares = rng.dirichlet(np.full(clients, beta))
            cuts = (np.cumsum(shares)[:-1] * idx.size).astype(int)
            for k, part in enumerate(np.split(idx, cuts)):
                buckets[k].append(part)
        plan = [np.sort(np.concatenate(b)) for b in buckets]
        if min(p.size for p in plan) >= min_per_client:
            return plan
    raise PartitionError(
        f"no Dirichlet(beta={beta}) plan gave every client >= {min_per_client} samples "
        f"in {MAX_PARTITION_ATTEMPTS} attempts"
    )


@dataclass(frozen=True)
class TransitionMatrix:
    entries: np.ndarray
    noise_rate: float
    kind: str

    @property
    def classes(self) -> int:
        return self.entries.shape[0]


def build_transition_matrix(kind: str, noise_rate: float, classes: int) -> TransitionMatrix:
    """Row-stochastic corruption matrix: entry [m, n] is P(noisy = n | clean = m)."""
    if classes < 2:
        raise ConfigError(f"need at least 2 classes, got {classes}")
    if not 0.0 <= noise_rate < 1.0:
        raise ConfigError(f"noise rate must lie in [0, 1), got {noise_rate}")
    if kind == "symflip":
        m = np.full((classes, classes), noise_rate / (classes - 1))
    elif kind == "pairflip":
        if noise_rate > PAIRFLIP_MAX_RATE:
            raise ConfigError(f"pairflip noise rate must be <= {PAIRFLIP_MAX_RATE}, got {noise_rate}")
        m = np.zeros((classes, classes))
        m[np.arange(classes), (np.arange(classes) + 1) % classes] = noise_rate
    else:
        raise ConfigError(f"unknown noise kind {kind!r}; expected 'symflip' or 'pairflip'")
    np.fill_diagonal(m, 1.0 - noise_rate)
    return TransitionMatrix(m, float(noise_rate), kind)


def apply_label_noise(labels, matrix: TransitionMatrix, seed: int) -> np.ndarray:
    """Resample every label independently from its row of ``matrix``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= matrix.classes):
        raise UsageError(f"labels must lie in [0, {matrix.classes})")
    rng = np.random.default_rng(seed)
    u = rng.random(labels.size)
    cdf = np.cumsum(matrix.entries, axis=1)
    cdf[:, -1] = 1.0
    out = (u[:, None] >= cdf[labels]).sum(axis=1)
    return out.astype(np.int64)


def empirical_flip_rate(original, corrupted) -> float:
    original = np.asarray(original)
    corrupted = np.asarray(corrupted)
    if original.shape != corrupted.shape:
        raise UsageError(f"label arrays differ in length: {original.shape} vs {corrupted.shape}")
    if original.size == 0:
        return 0.0
    return float(np.mean(original != corrupted))


def class_shares(labels: np.ndarray, plan: Sequence[np.ndarray], classes: int) -> np.ndarray:
    """[K x C] fraction of each client's samples in each class."""
    out = np.zeros((len(plan), classes))
    for k, idx in enumerate(plan):
        counts = np.bincount(np.asarray(labels)[idx], minlength=classes)
        out[k] = counts / max(counts.sum(), 1)
    return out


def client_class_fractions(labels: np.ndarray, plan: Sequence[np.ndarray], classes: int) -> np.ndarray:
    """[K x C] fraction of class c's samples held by client k; columns sum to 1."""
    labels = np.asarray(labels)
    totals = np.bincount(labels, minlength=classes).astype(np.float64)
    out = np.zeros((len(plan), classes))
    for k, idx in enumerate(plan):
        out[k] = np.bincount(labels[idx], minlength=classes)
    return out / np.maximum(totals, 1.0)
