"""Normalization statistics under a change of input resolution.

A normalization layer stores the per-channel mean and variance of the data
it was trained on.  When the input is resampled by a factor ``f`` the
statistics of the new stream follow from those of the old one, so they can
be rewritten without touching target data:

===============  ==========================  ===================================
transform        mean                        variance
===============  ==========================  ===================================
sum-bin          ``f mu``                    ``f**2 var``
repeat           ``mu``                      ``var``
pad-zeros        ``mu / f``                  ``var / f + mu**2 (f - 1) / f**2``
===============  ==========================  ===================================

``f`` is the window length of a down-transform or the expansion factor
of pad-zeros / repeat.  The sum-binning rule is also used in reverse for
coarse-to-fine deployment with ``f = dt_target / dt_source < 1``.

The sum-binning variance ``f**2 var`` is exact when the steps inside a
window are identical; for i.i.d. steps the window sum has variance
``f var`` instead.  The ``f**2`` rule is kept as the reference rule for
model adaptation (see the README for the measured gap).  Pad-zeros and
repeat are exact for i.i.d. streams.  Max-pool and binary sum-binning have
no closed form.  The empirical mode uses heuristic rules that worked better
in practice for them, and also replaces the pad-zeros variance by ``var``.
"""

from __future__ import annotations

import copy
import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from tempo_snn.resample import ResampleKind


@dataclass
class NormStats:
    mu: np.ndarray
    var: np.ndarray
    eps: float = 1e-5
    gain: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.mu = np.array(self.mu, dtype=np.float64).reshape(-1)
        self.var = np.array(self.var, dtype=np.float64).reshape(-1)
        n = self.mu.shape[0]
        if self.var.shape != (n,):
            raise ValueError("mu and var must have the same length")
        if np.any(self.var < 0):
            raise ValueError("variances must be nonnegative")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        self.gain = np.ones(n) if self.gain is None else np.array(self.gain, dtype=np.float64).reshape(-1)
        self.bias = np.zeros(n) if self.bias is None else np.array(self.bias, dtype=np.float64).reshape(-1)
        if self.gain.shape != (n,) or self.bias.shape != (n,):
            raise ValueError("gain and bias must match the channel count")

    @classmethod
    def identity(cls, channels: int) -> "NormStats":
        """Statistics that make the layer a pass-through up to ``eps``."""
        return cls(np.zeros(channels), np.ones(channels) - 1e-5)

    @property
    def channels(self) -> int:
        return self.mu.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Normalize ``x`` of shape ``(..., channels)``."""
        return (x - self.mu) / np.sqrt(self.var + self.eps) * self.gain + self.bias

    def copy(self) -> "NormStats":
        return NormStats(self.mu.copy(), self.var.copy(), self.eps, self.gain.copy(), self.bias.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, NormStats) and self.eps == other.eps and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("mu", "var", "gain", "bias")
        )


class StatMode(enum.Enum):
    THEORETICAL = "theoretical"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class StatAdaptRule:
    transform: ResampleKind = ResampleKind.SUM_BIN
    mode: StatMode = field(default=StatMode.THEORETICAL)


def adapt_norm_stats(s: NormStats, rule: StatAdaptRule, factor: float) -> NormStats:
    """Rewrite ``(mu, var)`` for input resampled by ``rule.transform`` with ``factor``."""
    f = float(factor)
    if not f > 0:
        raise ValueError(f"factor must be positive, got {factor}")
    kind, mode = rule.transform, rule.mode
    mu, var = s.mu, s.var
    if f == 1.0 or kind is ResampleKind.REPEAT_ELEMS:
        new_mu, new_var = mu.copy(), var.copy()
    elif kind is ResampleKind.SUM_BIN:
        new_mu, new_var = f * mu, f * f * var
    elif kind is ResampleKind.PAD_ZEROS:
        new_mu = mu / f
        if mode is StatMode.THEORETICAL:
            new_var = var / f + mu * mu * (f - 1.0) / (f * f)
        else:
            new_var = var.copy()
    else:
        if mode is StatMode.THEORETICAL:
            raise ValueError(f"no theoretical rule for {kind.value}; use empirical mode")
        if kind is ResampleKind.MAX_POOL:
            new_mu, new_var = f * mu, f * var
        else:
            new_mu, new_var = f * mu, f * f * var
    return NormStats(new_mu, new_var, s.eps, s.gain.copy(), s.bias.copy())


def transform_factor(rule: StatAdaptRule, rho: float) -> float:
    """Factor of ``rule.transform`` that turns steps of ``dt`` into steps of ``rho * dt``.

    Down-transforms merge ``rho`` steps; up-transforms split a step into
    ``1 / rho``.
    """
    return float(rho) if rule.transform.is_down else 1.0 / float(rho)


def adapt_model_norms(model, rule: StatAdaptRule, factor: float):
    """Return a copy of ``model`` with only its first normalization adapted.

    ``model`` is anything with a ``layers`` list whose items carry a
    ``norm`` attribute (``None`` for layers without normalization).
    """
    out = copy.deepcopy(model)
    for layer in out.layers:
        if layer.norm is not None:
            layer.norm = adapt_norm_stats(layer.norm, rule, factor)
            return out
    warnings.warn("model has no normalization layer; statistics left unchanged", stacklevel=2)
    return out
