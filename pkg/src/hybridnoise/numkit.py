"""Numerically stable scalar kernels shared by the other modules.

Everything here works in log space: Poisson mass, multivariate Gaussian
log-density, and log-sum-exp.  The single matrix factorization primitive is
an unpivoted Cholesky; log-determinants and solves derive from it, and a
failure doubles as the positive-definiteness check.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DimensionMismatchError,
    InvalidParameterError,
    NotPositiveDefiniteError,
)

LOG_2PI = math.log(2.0 * math.pi)

# Relative tolerance for covariance symmetry; M-step output is symmetric
# only up to rounding, so inputs are symmetrized before factorization.
SYMMETRY_RTOL = 1e-12


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Validate and return ``x`` as a finite 1-D float array."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1 or v.size < 1:
        raise InvalidParameterError(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError("vector entries must be finite")
    if dim is not None and v.size != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {v.size}")
    return v


def as_square_matrix(a, dim: int | None = None) -> np.ndarray:
    """Validate and return ``a`` as a finite square 2-D float array."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise InvalidParameterError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidParameterError("matrix entries must be finite")
    if dim is not None and m.shape[0] != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {m.shape[0]}")
    return m


def check_symmetric(a: np.ndarray) -> np.ndarray:
    """Check relative symmetry of ``a`` and return its symmetrized form."""
    scale = np.max(np.abs(a))
    asym = np.max(np.abs(a - a.T))
    if scale > 0 and asym > SYMMETRY_RTOL * scale:
        raise InvalidParameterError(
            f"matrix is not symmetric (max asymmetry {asym:.3e}, scale {scale:.3e})"
        )
    return 0.5 * (a + a.T)


def cholesky(a) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises NotPositiveDefiniteError carrying the index of the first
    nonpositive pivot.  The input is symmetrized before factorization.
    """
    m = check_symmetric(as_square_matrix(a))
    d = m.shape[0]
    lower = np.zeros_like(m)
    for j in range(d):
        pivot = m[j, j] - lower[j, :j] @ lower[j, :j]
        if not pivot > 0:
            raise NotPositiveDefiniteError(j)
        ljj = math.sqrt(pivot)
        lower[j, j] = ljj
        if j + 1 < d:
            lower[j + 1 :, j] = (m[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / ljj
    return lower


def poisson_pmf(lam: float, k: int) -> float:
    """Poisson mass e^{-lam} lam^k / k!, evaluated in log space."""
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidParameterError(f"lambda must be a positive finite real, got {lam!r}")
    if k < 0 or int(k) != k:
        raise InvalidParameterError(f"k must be a nonnegative integer, got {k!r}")
    k = int(k)
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1))


def log_sum_exp(values) -> float:
    """ln(sum(exp(values))) via the max-subtraction trick."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InvalidParameterError("log_sum_exp of an empty list")
    vmax = np.max(v)
    if not np.isfinite(vmax):
        if vmax == np.inf:
            return math.inf
        raise InvalidParameterError("log_sum_exp needs at least one finite entry")
    return float(vmax + np.log(np.sum(np.exp(v - vmax))))


def mvn_logpdf(z, mu, sigma) -> float:
    """Log-density of a multivariate Gaussian, via Cholesky.

    -(D/2) ln(2 pi) - 1/2 ln|Sigma| - 1/2 (z-mu)^T Sigma^{-1} (z-mu); the
    determinant comes from the Cholesky diagonal and the quadratic form from
    a triangular solve, never an explicit inverse.
    """
    zv = as_vector(z)
    mv = as_vector(mu, dim=zv.size)
    lower = cholesky(as_square_matrix(sigma, dim=zv.size))
    y = solve_triangular(lower, zv - mv, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(lower))))
    return -0.5 * (zv.size * LOG_2PI + logdet + float(y @ y))


def mvn_logpdf_batch(points: np.ndarray, mu, sigma) -> np.ndarray:
    """Row-wise Gaussian log-density for an N x D array of points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    mv = as_vector(mu, dim=pts.shape[1])
    lower = cholesky(as_square_matrix(sigma, dim=pts.shape[1]))
    y = solve_triangular(lower, (pts - mv).T, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(lower))))
    quad = np.einsum("dn,dn->n", y, y)
    return -0.5 * (pts.shape[1] * LOG_2PI + logdet + quad)
