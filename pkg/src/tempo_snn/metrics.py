"""Quality of a membrane trace against a reference trace.

Q1 is one minus the mean squared error relative to the signal variance, and
Q2 is the Pearson correlation.  Before comparing traces recorded at
different resolutions, the finer one is reduced with :func:`subsample`.
"""

from __future__ import annotations

import numpy as np


def subsample(fine, rho_bar: int) -> np.ndarray:
    """Keep the last element of every window of ``rho_bar`` samples."""
    x = np.asarray(fine, dtype=np.float64)
    if int(rho_bar) != rho_bar or rho_bar < 1:
        raise ValueError(f"subsampling factor must be a positive integer, got {rho_bar!r}")
    rho_bar = int(rho_bar)
    if x.shape[-1] % rho_bar:
        raise ValueError(f"length {x.shape[-1]} is not divisible by {rho_bar}")
    return x[..., rho_bar - 1 :: rho_bar]


def q_metrics(reference, candidate, scale=None) -> tuple[float, float]:
    """Return ``(Q1, Q2)``.

    ``scale`` is the trace whose population variance normalizes the squared
    error in Q1; it defaults to ``reference``.  Q2 uses the sample (1/(N-1))
    convention so it is exactly the correlation coefficient.

    Raises ``ValueError`` for a constant reference (or scale) and for a
    constant candidate, since Q2 is undefined there; use :func:`q1` alone if
    only the error term is wanted.
    """
    ref = np.asarray(reference, dtype=np.float64).reshape(-1)
    cand = np.asarray(candidate, dtype=np.float64).reshape(-1)
    if ref.shape != cand.shape:
        raise ValueError(f"length mismatch: {ref.shape[0]} vs {cand.shape[0]}")
    if ref.shape[0] < 2:
        raise ValueError("need at least two samples")
    if np.var(ref) == 0.0:
        raise ValueError("degenerate reference: zero variance")
    first = q1(ref, cand, scale)
    if np.var(cand) == 0.0:
        raise ValueError(f"Q2 undefined for a constant candidate (Q1={first:.6g})")
    rc = ref - ref.mean()
    cc = cand - cand.mean()
    n = ref.shape[0]
    cov = (rc @ cc) / (n - 1)
    second = cov / np.sqrt((rc @ rc) / (n - 1) * (cc @ cc) / (n - 1))
    return first, float(np.clip(second, -1.0, 1.0))


def q1(reference, candidate, scale=None) -> float:
    ref = np.asarray(reference, dtype=np.float64).reshape(-1)
    cand = np.asarray(candidate, dtype=np.float64).reshape(-1)
    s = ref if scale is None else np.asarray(scale, dtype=np.float64).reshape(-1)
    var = np.var(s)
    if var == 0.0:
        raise ValueError("degenerate reference: zero variance")
    return float(1.0 - np.mean((ref - cand) ** 2) / var)
