"""Temporal transforms on integer spike tensors.

Down-transforms (sum-binning and its binary / max variants) merge ``factor``
consecutive steps into one; trailing steps that do not fill a window are
dropped.  Up-transforms (zero-padding, repetition) split each step into
``factor`` steps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ResampleKind(enum.Enum):
    SUM_BIN = "sum-bin"
    BINARY_SUM_BIN = "binary-sum-bin"
    MAX_POOL = "max-pool"
    PAD_ZEROS = "pad-zeros"
    REPEAT_ELEMS = "repeat-elems"

    @property
    def is_down(self) -> bool:
        return self in (ResampleKind.SUM_BIN, ResampleKind.BINARY_SUM_BIN, ResampleKind.MAX_POOL)

    @classmethod
    def parse(cls, text: str) -> "ResampleKind":
        key = text.strip().lower().replace("_", "-")
        for k in cls:
            if k.value == key or k.value.replace("-", "") == key.replace("-", ""):
                return k
        raise ValueError(f"unknown resample kind {text!r}")


@dataclass
class SpikeTensor:
    """Spike counts of shape ``(channels, timesteps)`` at step duration ``dt`` (ms)."""

    counts: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim == 1:
            c = c.reshape(1, -1)
        if c.ndim != 2:
            raise ValueError(f"counts must be channels x timesteps, got shape {c.shape}")
        if c.size and not np.issubdtype(c.dtype, np.integer):
            if not np.all(np.equal(np.mod(c, 1), 0)):
                raise ValueError("spike counts must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValueError("spike counts must be nonnegative")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        self.counts = c
        self.dt = float(self.dt)

    @property
    def channels(self) -> int:
        return self.counts.shape[0]

    @property
    def timesteps(self) -> int:
        return self.counts.shape[1]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SpikeTensor)
            and self.dt == other.dt
            and np.array_equal(self.counts, other.counts)
        )


def _windows(a: np.ndarray, factor: int) -> np.ndarray:
    n = a.shape[-1] // factor
    return a[..., : n * factor].reshape(*a.shape[:-1], n, factor)


def _check_factor(factor) -> int:
    if int(factor) != factor or factor < 1:
        raise ValueError(f"resample factor must be a positive integer, got {factor!r}")
    return int(factor)


def sum_bin(x, factor: int) -> np.ndarray:
    """Window sums along the last axis for real or integer arrays."""
    factor = _check_factor(factor)
    return _windows(np.asarray(x), factor).sum(axis=-1)


def resample(x: SpikeTensor, kind: ResampleKind, factor: int) -> SpikeTensor:
    factor = _check_factor(factor)
    if factor == 1 and kind is not ResampleKind.BINARY_SUM_BIN:
        return SpikeTensor(x.counts.copy(), x.dt)
    c = x.counts
    if kind is ResampleKind.SUM_BIN:
        out = _windows(c, factor).sum(axis=-1)
    elif kind is ResampleKind.BINARY_SUM_BIN:
        out = (_windows(c, factor).sum(axis=-1) > 0).astype(np.int64)
    elif kind is ResampleKind.MAX_POOL:
        w = _windows(c, factor)
        out = w.max(axis=-1) if w.shape[-2] else np.zeros((c.shape[0], 0), np.int64)
    elif kind is ResampleKind.PAD_ZEROS:
        out = np.zeros((c.shape[0], c.shape[1], factor), np.int64)
        out[..., -1] = c
        out = out.reshape(c.shape[0], -1)
    elif kind is ResampleKind.REPEAT_ELEMS:
        out = np.repeat(c, factor, axis=1)
    else:  # pragma: no cover
        raise ValueError(kind)
    dt = x.dt * factor if kind.is_down else x.dt / factor
    return SpikeTensor(out, dt)


def resample_dataset(dataset, kind: ResampleKind, factor: int):
    """Apply :func:`resample` to every ``(tensor, label)`` pair."""
    items = list(dataset)
    if items:
        ch = {x.channels for x, _ in items}
        if len(ch) != 1:
            raise ValueError(f"samples have differing channel counts {sorted(ch)}")
    return [(resample(x, kind, factor), y) for x, y in items]
