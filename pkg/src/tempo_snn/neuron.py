"""Spiking neuron models.

``GeneralNeuron`` is the n-state linear neuron

    v[t+1] = Hv v[t] + Hf s[t] + Hi (W s_in)[t] + Hr (V s_out)[t]
    s[t]   = 1 if v[t][0] >= theta else 0

and ``AdLifParams`` is the adaptive LIF neuron with membrane ``u`` and
adaptation ``w``, which maps onto it with state ``v = [u, w]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdLifParams:
    """Adaptive LIF parameters.

    alpha, beta are the per-step decays of membrane and adaptation; a couples
    the membrane into the adaptation variable and b is the spike-triggered
    adaptation jump.  ``theta=math.inf`` disables spiking.
    """

    alpha: float
    beta: float
    a: float
    b: float
    theta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0.0 <= self.a < 1.0:
            raise ValueError(f"a must lie in [0, 1), got {self.a}")
        if not 0.0 <= self.b <= 2.0:
            raise ValueError(f"b must lie in [0, 2], got {self.b}")
        if math.isnan(self.theta) or self.theta == -math.inf:
            raise ValueError(f"invalid threshold {self.theta}")


@dataclass
class GeneralNeuron:
    Hv: np.ndarray
    Hf: np.ndarray
    Hi: np.ndarray
    Hr: np.ndarray
    theta: float = 1.0
    n: int = field(init=False)

    def __post_init__(self):
        self.Hv = np.array(self.Hv, dtype=np.float64)
        if self.Hv.ndim != 2 or self.Hv.shape[0] != self.Hv.shape[1]:
            raise ValueError(f"Hv must be square, got shape {self.Hv.shape}")
        self.n = self.Hv.shape[0]
        for name in ("Hf", "Hi", "Hr"):
            vec = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            if vec.shape != (self.n,):
                raise ValueError(f"{name} must have {self.n} entries, got {vec.shape}")
            setattr(self, name, vec)
        for name in ("Hv", "Hf", "Hi", "Hr"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")
        if math.isnan(self.theta) or self.theta == -math.inf:
            raise ValueError(f"invalid threshold {self.theta}")

    def copy(self) -> "GeneralNeuron":
        return GeneralNeuron(self.Hv.copy(), self.Hf.copy(), self.Hi.copy(), self.Hr.copy(), self.theta)

    def allclose(self, other: "GeneralNeuron", atol: float) -> bool:
        return (
            self.n == other.n
            and self.theta == other.theta
            and all(
                np.allclose(getattr(self, k), getattr(other, k), rtol=0.0, atol=atol)
                for k in ("Hv", "Hf", "Hi", "Hr")
            )
        )


def adlif_matrices(alpha, beta, a, b, theta=1.0):
    """Raw general-form matrices for adLIF values, without range checks.

    The reset entry ``-alpha*theta`` is set to 0 when ``theta`` is infinite:
    the neuron never spikes, so the term is never applied.
    """
    reset = 0.0 if math.isinf(theta) else -alpha * theta
    Hv = np.array([[alpha, -(1.0 - alpha)], [a, beta]], dtype=np.float64)
    Hf = np.array([reset, b], dtype=np.float64)
    Hi = np.array([1.0 - alpha, 0.0], dtype=np.float64)
    return Hv, Hf, Hi, Hi.copy()


def adlif_to_general(p: AdLifParams) -> GeneralNeuron:
    Hv, Hf, Hi, Hr = adlif_matrices(p.alpha, p.beta, p.a, p.b, p.theta)
    return GeneralNeuron(Hv, Hf, Hi, Hr, p.theta)


def step(nrn: GeneralNeuron, state, feedforward_drive: float, recurrent_drive: float = 0.0):
    """Advance one timestep; returns ``(next_state, spike)``.

    The spike is read off the state *before* the update and then fed back
    through ``Hf`` in the same update.
    """
    v = np.asarray(state, dtype=np.float64).reshape(-1)
    if v.shape != (nrn.n,):
        raise ValueError(f"state has {v.shape[0]} entries, neuron has {nrn.n}")
    if not (math.isfinite(feedforward_drive) and math.isfinite(recurrent_drive)):
        raise ValueError("drives must be finite")
    spike = 1 if v[0] >= nrn.theta else 0
    nxt = nrn.Hv @ v + nrn.Hi * feedforward_drive
    if recurrent_drive:
        nxt = nxt + nrn.Hr * recurrent_drive
    if spike:
        nxt = nxt + nrn.Hf
    return nxt, spike


def simulate(nrn: GeneralNeuron, inputs, v0=None, record: str = "pre"):
    """Drive a single neuron with a real-valued input sequence.

    Returns ``(states, spikes)`` with ``states`` of shape ``(T, n)``.  With
    ``record="pre"`` row t is v[t] (row 0 is ``v0``); with ``record="post"``
    row t is v[t+1], the state after consuming input t.
    """
    if record not in ("pre", "post"):
        raise ValueError(f"record must be 'pre' or 'post', got {record!r}")
    x = np.asarray(inputs, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("input sequence must be finite")
    v = np.zeros(nrn.n) if v0 is None else np.array(v0, dtype=np.float64).reshape(-1)
    if v.shape != (nrn.n,):
        raise ValueError(f"initial state has {v.shape[0]} entries, neuron has {nrn.n}")
    T = x.shape[0]
    states = np.empty((T, nrn.n))
    spikes = np.zeros(T, dtype=np.int8)
    Hv, Hf, Hi, theta = nrn.Hv, nrn.Hf, nrn.Hi, nrn.theta
    for t in range(T):
        if record == "pre":
            states[t] = v
        s = v[0] >= theta
        v = Hv @ v + Hi * x[t]
        if s:
            v = v + Hf
            spikes[t] = 1
        if record == "post":
            states[t] = v
    return states, spikes


def simulate_adlif(p: AdLifParams, inputs, v0=None, record: str = "pre"):
    """Direct adLIF recursion on scalars, same conventions as :func:`simulate`."""
    x = np.asarray(inputs, dtype=np.float64).reshape(-1)
    u, w = (0.0, 0.0) if v0 is None else (float(v0[0]), float(v0[1]))
    alpha, beta, a, b, theta = p.alpha, p.beta, p.a, p.b, p.theta
    T = x.shape[0]
    states = np.empty((T, 2))
    spikes = np.zeros(T, dtype=np.int8)
    for t in range(T):
        if record == "pre":
            states[t] = (u, w)
        s = 1.0 if u >= theta else 0.0
        reset = theta * s if s else 0.0
        u, w = (
            alpha * (u - reset) + (1.0 - alpha) * x[t] - (1.0 - alpha) * w,
            a * u + beta * w + b * s,
        )
        spikes[t] = int(s)
        if record == "post":
            states[t] = (u, w)
    return states, spikes
