"""Re-parameterize neurons for a different timestep duration.

Everything is expressed through the ratio ``rho = dt_target / dt_source``.
``rho > 1`` takes a model to a coarser grid (fewer, longer steps) and
``rho < 1`` to a finer one.

Integral
    Treats the neuron as a zero-order-hold discretization of a continuous
    linear system and re-discretizes it: ``Hv' = Hv**rho`` and
    ``Hk' = (Hv' - I)(Hv - I)^-1 Hk``.
Euler
    Forward-Euler re-discretization: ``Hv' = I + rho (Hv - I)``, ``Hk' = rho Hk``.
Expectation
    Matches the state after ``rho`` fine steps of a bin-constant input
    (integer ``rho`` or integer ``1/rho`` only).
Time constant
    Only the decays change, ``alpha' = alpha**rho`` and ``beta' = beta**rho``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from tempo_snn.errors import DataError, RatioError
from tempo_snn.linalg import geom_sum, mat_inv, mat_pow_frac
from tempo_snn.neuron import AdLifParams, GeneralNeuron, adlif_to_general


class AdaptMethod(enum.Enum):
    NONE = "none"
    INTEGRAL = "integral"
    EULER = "euler"
    EXPECTATION = "expectation"
    TIME_CONSTANT = "time-constant"

    @classmethod
    def parse(cls, text: str) -> "AdaptMethod":
        key = text.strip().lower().replace("_", "-")
        aliases = {"timeconstant": "time-constant", "time-const": "time-constant", "tc": "time-constant"}
        key = aliases.get(key, key)
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown adaptation method {text!r}")


@dataclass(frozen=True)
class ResolutionRatio:
    """Exact ratio ``dt_target / dt_source`` stored as a fraction."""

    value: Fraction

    def __post_init__(self):
        v = Fraction(self.value)
        if v <= 0:
            raise ValueError(f"resolution ratio must be positive, got {v}")
        object.__setattr__(self, "value", v)

    @classmethod
    def parse(cls, text) -> "ResolutionRatio":
        """Accept ``"P/Q"``, an integer, a decimal string or a number."""
        if isinstance(text, ResolutionRatio):
            return text
        if isinstance(text, float):
            return cls(Fraction(text).limit_denominator(10**6))
        try:
            return cls(Fraction(str(text).strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse resolution ratio {text!r}") from exc

    @property
    def rho(self) -> float:
        return float(self.value)

    @property
    def rho_bar(self) -> float:
        return float(1 / self.value)

    @property
    def inverse(self) -> "ResolutionRatio":
        return ResolutionRatio(1 / self.value)

    def is_identity(self) -> bool:
        return self.value == 1

    def integer_steps(self) -> int | None:
        """``rho`` if it is an integer, ``1/rho`` if that is, else ``None``."""
        if self.value.denominator == 1:
            return self.value.numerator
        if self.value.numerator == 1:
            return self.value.denominator
        return None

    def __str__(self) -> str:
        return str(self.value)


def _rebuild(nrn: GeneralNeuron, Hv, M=None, scale=None) -> GeneralNeuron:
    """New neuron with ``Hv`` and each input matrix mapped by ``M`` or ``scale``."""
    mapped = [M @ h if M is not None else scale * h for h in (nrn.Hf, nrn.Hi, nrn.Hr)]
    return GeneralNeuron(Hv, *mapped, nrn.theta)


def adapt_integral(nrn: GeneralNeuron, r: ResolutionRatio) -> GeneralNeuron:
    if r.is_identity():
        return nrn.copy()
    eye = np.eye(nrn.n)
    inv = mat_inv(nrn.Hv - eye)
    Hv = mat_pow_frac(nrn.Hv, r.rho)
    return _rebuild(nrn, Hv, M=(Hv - eye) @ inv)


def adapt_euler(nrn: GeneralNeuron, r: ResolutionRatio) -> GeneralNeuron:
    # Entries may leave the stable range for large rho; that is the method.
    if r.is_identity():
        return nrn.copy()
    eye = np.eye(nrn.n)
    return _rebuild(nrn, eye + r.rho * (nrn.Hv - eye), scale=r.rho)


def adapt_expectation(nrn: GeneralNeuron, r: ResolutionRatio) -> GeneralNeuron:
    k = r.integer_steps()
    if k is None:
        raise RatioError(f"expectation requires integer ratio (got rho={r})")
    if r.is_identity():
        return nrn.copy()
    Hv = mat_pow_frac(nrn.Hv, r.rho)
    if r.value > 1:
        M = geom_sum(nrn.Hv, k)
    else:
        M = mat_inv(geom_sum(Hv, k))
    return _rebuild(nrn, Hv, M=M)


def adapt_time_constant(p: AdLifParams, r: ResolutionRatio) -> AdLifParams:
    if r.is_identity():
        return p
    return AdLifParams(p.alpha**r.rho, p.beta**r.rho, p.a, p.b, p.theta)


_GENERAL = {
    AdaptMethod.INTEGRAL: adapt_integral,
    AdaptMethod.EULER: adapt_euler,
    AdaptMethod.EXPECTATION: adapt_expectation,
}


def adapt_neuron(nrn, method: AdaptMethod, r: ResolutionRatio):
    """Apply ``method`` to an ``AdLifParams`` or ``GeneralNeuron``.

    ``NONE`` returns the input object itself.  ``TIME_CONSTANT`` needs the
    adLIF parameterization and returns ``AdLifParams``; the matrix methods
    return a ``GeneralNeuron``.
    """
    if method is AdaptMethod.NONE:
        return nrn
    if method is AdaptMethod.TIME_CONSTANT:
        if not isinstance(nrn, AdLifParams):
            raise DataError(
                "time-constant requires explicit Δ-dependence: "
                "the neuron carries no adLIF parameters to rescale"
            )
        return adapt_time_constant(nrn, r)
    general = adlif_to_general(nrn) if isinstance(nrn, AdLifParams) else nrn
    return _GENERAL[method](general, r)
