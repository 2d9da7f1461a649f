"""Small dense real-matrix algebra.

Matrices here are at most a handful of rows (the adLIF state is 2x2), so
everything is plain ``numpy`` on float64 arrays.  The functions validate
their inputs and raise from :mod:`tempo_snn.errors` instead of returning
garbage when a power or inverse is not well defined.
"""

from __future__ import annotations

import numpy as np

from tempo_snn.errors import IllConditionedError, NoRealPowerError, SingularMatrixError

#: |det| threshold, relative to max|entry|**n, below which a matrix is singular.
SINGULAR_TOL = 1e-12
#: Largest accepted condition number of the eigenvector basis in mat_pow_frac.
MAX_EIGENBASIS_COND = 1e8
#: Relative tolerance on the imaginary part left after reconstruction.
IMAG_TOL = 1e-9


def as_mat(a) -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float64 array (copy)."""
    m = np.array(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def _square(a) -> np.ndarray:
    m = as_mat(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    return m


def mat_pow_int(a, k: int) -> np.ndarray:
    """Integer power by binary exponentiation; ``k == 0`` gives the identity."""
    m = _square(a)
    if int(k) != k or k < 0:
        raise ValueError(f"exponent must be a nonnegative integer, got {k!r}")
    k = int(k)
    result = np.eye(m.shape[0])
    base = m
    while k:
        if k & 1:
            result = result @ base
        k >>= 1
        if k:
            base = base @ base
    return result


def mat_inv(a) -> np.ndarray:
    m = _square(a)
    n = m.shape[0]
    scale = np.max(np.abs(m))
    det = np.linalg.det(m)
    if scale == 0.0 or abs(det) < SINGULAR_TOL * scale**n:
        raise SingularMatrixError(f"singular matrix (det={det:.3e})")
    return np.linalg.inv(m)


def mat_pow_frac(a, p: float, max_cond: float = MAX_EIGENBASIS_COND) -> np.ndarray:
    """Principal real power ``a**p`` for real ``p > 0``.

    Uses the complex eigendecomposition ``a = V diag(w) V^-1`` and raises each
    eigenvalue on the principal branch.  Integer ``p`` is delegated to
    :func:`mat_pow_int` so it is exact.

    Raises
    ------
    NoRealPowerError
        An eigenvalue lies on the closed negative real axis, or the result
        has a non-negligible imaginary part.
    IllConditionedError
        The eigenvector basis is (close to) defective.
    """
    m = _square(a)
    if not p > 0 or not np.isfinite(p):
        raise ValueError(f"exponent must be a positive real, got {p!r}")
    if float(p).is_integer():
        return mat_pow_int(m, int(p))

    w, v = np.linalg.eig(m)
    tiny = 1e-14 * max(1.0, float(np.max(np.abs(w))))
    on_axis = (np.abs(w.imag) <= tiny) & (w.real <= tiny)
    if np.any(on_axis):
        raise NoRealPowerError(
            f"no real principal power: eigenvalue(s) {w[on_axis]} on the negative real axis"
        )
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > max_cond:
        raise IllConditionedError(
            f"ill-conditioned eigenbasis (cond={cond:.3e} > {max_cond:.1e})", cond
        )
    wp = w.astype(np.complex128) ** p
    out = (v * wp) @ np.linalg.inv(v)
    scale = max(1.0, float(np.max(np.abs(out.real))))
    resid = float(np.max(np.abs(out.imag)))
    if resid > IMAG_TOL * scale:
        raise NoRealPowerError(f"no real principal power: imaginary residue {resid:.3e}")
    return np.ascontiguousarray(out.real)


def geom_sum(a, m: int) -> np.ndarray:
    """Return ``a**(m-1) + ... + a + I`` for a positive integer ``m``."""
    sq = _square(a)
    if int(m) != m or m < 1:
        raise ValueError(f"geometric sum needs a positive integer length, got {m!r}")
    acc = np.eye(sq.shape[0])
    # Horner form: ((a + I) a + I) a + I ...
    for _ in range(int(m) - 1):
        acc = acc @ sq + np.eye(sq.shape[0])
    return acc
