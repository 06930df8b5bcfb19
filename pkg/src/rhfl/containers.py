"""Little-endian binary containers for datasets and model checkpoints.

Dataset (``RHFLDS1``)::

    magic  b"RHFLDS1"
    u32    classes, dim, rows
    f64    features, row-major (rows * dim)
    u32    labels (rows)

Checkpoint (``RHFLCK1``)::

    magic  b"RHFLCK1"
    u32    layer count L
    u32    (fan_in, fan_out) for each layer
    f64    per layer: weight (fan_in * fan_out, row-major) then bias (fan_out)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import FormatError
from .models import MLP

DATASET_MAGIC = b"RHFLDS1"
CHECKPOINT_MAGIC = b"RHFLCK1"


def dataset_to_bytes(ds: Dataset) -> bytes:
    header = DATASET_MAGIC + struct.pack("<3I", ds.classes, ds.dim, len(ds))
    return header + ds.features.astype("<f8").tobytes() + ds.labels.astype("<u4").tobytes()


def dataset_from_bytes(buf: bytes) -> Dataset:
    n_magic = len(DATASET_MAGIC)
    if buf[:n_magic] != DATASET_MAGIC:
        raise FormatError("not a dataset container (bad magic)")
    try:
        classes, dim, rows = struct.unpack_from("<3I", buf, n_magic)
    except struct.error as exc:
        raise FormatError("truncated dataset header") from exc
    off = n_magic + 12
    expected = off + rows * dim * 8 + rows * 4
    if len(buf) != expected:
        raise FormatError(f"dataset container has {len(buf)} bytes, header implies {expected}")
    features = np.frombuffer(buf, dtype="<f8", count=rows * dim, offset=off).reshape(rows, dim)
    labels = np.frombuffer(buf, dtype="<u4", count=rows, offset=off + rows * dim * 8)
    return Dataset(features.astype(np.float64), labels.astype(np.int64), classes)


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())


def checkpoint_to_bytes(model: MLP) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(model.weights))]
    for w in model.weights:
        parts.append(struct.pack("<2I", *w.shape))
    for w, b in zip(model.weights, model.biases):
        parts.append(w.data.astype("<f8").tobytes())
        parts.append(b.data.astype("<f8").tobytes())
    return b"".join(parts)


def checkpoint_from_bytes(buf: bytes) -> list[np.ndarray]:
    """Parameter arrays in ``MLP.params`` order (w0, b0, w1, b1, ...)."""
    n_magic = len(CHECKPOINT_MAGIC)
    if buf[:n_magic] != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint container (bad magic)")
    try:
        (layers,) = struct.unpack_from("<I", buf, n_magic)
        shapes = [struct.unpack_from("<2I", buf, n_magic + 4 + 8 * i) for i in range(layers)]
    except struct.error as exc:
        raise FormatError("truncated checkpoint header") from exc
    off = n_magic + 4 + 8 * layers
    expected = off + 8 * sum(a * b + b for a, b in shapes)
    if len(buf) != expected:
        raise FormatError(f"checkpoint has {len(buf)} bytes, header implies {expected}")
    arrays = []
    for fan_in, fan_out in shapes:
        w = np.frombuffer(buf, dtype="<f8", count=fan_in * fan_out, offset=off).reshape(fan_in, fan_out)
        off += 8 * fan_in * fan_out
        b = np.frombuffer(buf, dtype="<f8", count=fan_out, offset=off)
        off += 8 * fan_out
        arrays += [w.astype(np.float64), b.astype(np.float64)]
    return arrays


def save_checkpoint(model: MLP, path) -> None:
    Path(path).write_bytes(checkpoint_to_bytes(model))


def load_checkpoint(path) -> list[np.ndarray]:
    return checkpoint_from_bytes(Path(path).read_bytes())
