"""Multivariate Gaussian search distribution.

The distribution is immutable.  Its Cholesky factor is computed once on
construction, and construction fails if the covariance is not positive
definite; callers that need jitter add it themselves.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatchError, FactorizationError

_LOG_2PI_E = math.log(2.0 * math.pi * math.e)


def _cholesky(mat: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"{what} is not positive definite") from exc


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class GaussianSearchDist:
    """N(mean, cov) with a cached lower-triangular factor ``chol``.

    Parameters
    ----------
    mean : array_like, shape (n,)
    cov : array_like, shape (n, n)
        Symmetric positive definite.  It is symmetrized as ``(cov + cov.T) / 2``
        to remove round-off asymmetry before factorization.
    """

    __slots__ = ("mean", "cov", "chol", "dim")

    def __init__(self, mean, cov):
        mean = np.array(mean, dtype=float).reshape(-1)
        cov = np.array(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        n = mean.shape[0]
        if n < 1 or cov.shape != (n, n):
            raise DimensionMismatchError(
                f"mean has length {n} but covariance has shape {cov.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise FactorizationError("distribution parameters must be finite")
        cov = 0.5 * (cov + cov.T)
        chol = _cholesky(cov, "covariance")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))
        object.__setattr__(self, "chol", _frozen(chol))
        object.__setattr__(self, "dim", n)

    def __setattr__(self, name, value):
        raise AttributeError("GaussianSearchDist is immutable")

    def __repr__(self) -> str:
        return f"GaussianSearchDist(dim={self.dim}, mean={self.mean!r})"

    @classmethod
    def isotropic(cls, mean, std: float) -> "GaussianSearchDist":
        mean = np.asarray(mean, dtype=float).reshape(-1)
        return cls(mean, (std**2) * np.eye(mean.shape[0]))

    def with_mean(self, mean) -> "GaussianSearchDist":
        return GaussianSearchDist(mean, self.cov)

    def log_det_cov(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def precision(self) -> np.ndarray:
        """Inverse covariance computed from the cached factor."""
        inv_chol = solve_triangular(self.chol, np.eye(self.dim), lower=True)
        prec = inv_chol.T @ inv_chol
        return 0.5 * (prec + prec.T)

    def whiten(self, x) -> np.ndarray:
        """Map points to ``chol^{-1} (x - mean)``; rows of a 2-D input are points."""
        x = np.asarray(x, dtype=float)
        diff = (x - self.mean).T
        return solve_triangular(self.chol, diff, lower=True).T


def sample(dist: GaussianSearchDist, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. samples as rows of a ``(count, n)`` array."""
    if count < 1:
        raise ValueError("count must be at least 1")
    z = rng.standard_normal((count, dist.dim))
    return dist.mean + z @ dist.chol.T


def entropy(dist: GaussianSearchDist) -> float:
    """Differential entropy in nats."""
    return 0.5 * dist.dim * _LOG_2PI_E + 0.5 * dist.log_det_cov()


def kl_divergence(p: GaussianSearchDist, q: GaussianSearchDist) -> float:
    """KL(p || q).  Throughout the package ``p`` is the new and ``q`` the old distribution."""
    if p.dim != q.dim:
        raise DimensionMismatchError(f"dimensions differ: {p.dim} vs {q.dim}")
    diff = solve_triangular(q.chol, q.mean - p.mean, lower=True)
    mahal = float(diff @ diff)
    trace_term = float(np.sum(solve_triangular(q.chol, p.chol, lower=True) ** 2))
    kl = 0.5 * (mahal + trace_term - p.dim + q.log_det_cov() - p.log_det_cov())
    return max(kl, 0.0)


def natural_params(dist: GaussianSearchDist) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(m, Lambda)`` with ``Lambda = cov^{-1}`` and ``m = Lambda @ mean``."""
    prec = dist.precision()
    return prec @ dist.mean, prec


def from_natural(m, precision) -> GaussianSearchDist:
    precision = np.array(precision, dtype=float)
    if precision.ndim == 0:
        precision = precision.reshape(1, 1)
    m = np.asarray(m, dtype=float).reshape(-1)
    precision = 0.5 * (precision + precision.T)
    chol = _cholesky(precision, "precision")
    n = precision.shape[0]
    inv_chol = solve_triangular(chol, np.eye(n), lower=True)
    cov = inv_chol.T @ inv_chol
    mean = inv_chol.T @ (inv_chol @ m)
    return GaussianSearchDist(mean, cov)


def scale_cov(dist: GaussianSearchDist, factor: float) -> GaussianSearchDist:
    """Multiply the covariance by ``factor`` (a variance factor, i.e. sigma**2)."""
    if not factor > 0:
        raise ValueError("covariance scale factor must be positive")
    return GaussianSearchDist(dist.mean, factor * dist.cov)
