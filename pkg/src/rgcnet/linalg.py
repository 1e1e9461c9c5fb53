"""Dense matrix helpers, seeded random initialisation and spectral radius.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 with two
dimensions; nothing here wraps them.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionError, ParameterError

__all__ = [
    "as_matrix",
    "make_rng",
    "matmul",
    "uniform_matrix",
    "SpectralEstimate",
    "estimate_spectral_radius",
    "spectral_radius",
    "row_sum_bound",
    "frobenius_norm",
]


def as_matrix(x, name="matrix") -> np.ndarray:
    """Return ``x`` as a 2-D float64 array (a 1-D input becomes one row)."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; identical seeds give identical streams on every platform."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def uniform_matrix(rng, rows: int, cols: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """I.i.d. entries drawn from ``[lo, hi)``."""
    if not lo < hi:
        raise ParameterError(f"empty range [{lo}, {hi})")
    if rows < 0 or cols < 0:
        raise ParameterError(f"negative shape ({rows}, {cols})")
    return make_rng(rng).uniform(lo, hi, size=(rows, cols))


class SpectralEstimate(NamedTuple):
    radius: float
    converged: bool
    iterations: int


def _square(m, name="matrix") -> np.ndarray:
    m = as_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got {m.shape}")
    return m


def estimate_spectral_radius(
    m,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    block: int = 8,
    seed: int = 0,
) -> SpectralEstimate:
    """Dominant eigenvalue modulus by block power iteration.

    A single power vector never settles when the dominant eigenvalues form
    a complex-conjugate pair, which is the common case for random
    non-symmetric reservoirs. Iterating a small orthonormal block and taking
    the largest Ritz-value modulus of the projected matrix handles that case
    and reduces to plain power iteration when ``block == 1``.

    Convergence is declared when two successive estimates differ by less
    than ``tol`` relative to the current estimate.
    """
    if tol <= 0:
        raise ParameterError("tol must be positive")
    m = _square(m)
    n = m.shape[0]
    if n == 0:
        return SpectralEstimate(0.0, True, 0)
    if not np.all(np.isfinite(m)):
        raise ParameterError("matrix has non-finite entries")
    p = max(1, min(n, block))
    rng = np.random.default_rng(seed)
    q = np.ones((n, p)) + 0.1 * rng.standard_normal((n, p))
    q, _ = np.linalg.qr(q)
    prev = None
    rho = 0.0
    for it in range(1, max_iter + 1):
        z = m @ q
        if not np.any(z):
            return SpectralEstimate(0.0, True, it)
        q, _ = np.linalg.qr(z)
        ritz = q.T @ (m @ q)
        rho = float(np.max(np.abs(np.linalg.eigvals(ritz))))
        if p == n:
            # the block spans the whole space: Ritz values are the spectrum
            return SpectralEstimate(rho, True, it)
        if prev is not None and abs(rho - prev) <= tol * max(rho, np.finfo(float).tiny):
            return SpectralEstimate(rho, True, it)
        prev = rho
    return SpectralEstimate(rho, False, max_iter)


def spectral_radius(m, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    return estimate_spectral_radius(m, tol=tol, max_iter=max_iter).radius


def row_sum_bound(m) -> float:
    """Max absolute row sum, an upper bound on the spectral radius."""
    m = as_matrix(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(m), axis=1)))


def frobenius_norm(m) -> float:
    m = as_matrix(m)
    return float(np.sqrt(np.sum(m * m)))
