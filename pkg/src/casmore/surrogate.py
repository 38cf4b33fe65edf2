"""Quadratic surrogate learning.

Samples live in a FIFO buffer.  Each fit whitens the inputs, picks the model
complexity from the number of stored samples, standardizes the design matrix
and the targets, solves a ridge regression and maps the coefficients back to
``f(x) ~ -1/2 x^T A x + x^T a + a0`` in the original coordinates.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import kernels
from .errors import DegenerateTargetsError, FitError

JITTER_LADDER = (0.0, 1e-12, 1e-9, 1e-6)


class Complexity(str, enum.Enum):
    INSUFFICIENT = "insufficient"
    LINEAR = "linear"
    DIAGONAL = "diagonal"
    FULL = "full"


def feature_count(n: int, complexity: Complexity) -> int:
    complexity = Complexity(complexity)
    if complexity is Complexity.LINEAR:
        return n + 1
    if complexity is Complexity.DIAGONAL:
        return 2 * n + 1
    if complexity is Complexity.FULL:
        return 1 + n + n * (n + 1) // 2
    raise ValueError("no features for an insufficient model")


def model_complexity(buffer_len: int, n: int) -> Complexity:
    """Richest model that has at least 10% more samples than parameters."""
    if n < 1:
        raise ValueError("dimension must be at least 1")
    if buffer_len < 1.1 * (1 + n):
        return Complexity.INSUFFICIENT
    if buffer_len < 1.1 * (1 + 2 * n):
        return Complexity.LINEAR
    if buffer_len < 1.1 * (1 + n * (n + 3) / 2):
        return Complexity.DIAGONAL
    return Complexity.FULL


def feature_map(x, complexity) -> np.ndarray:
    """Features ``[1, x, quadratic terms]`` for one point or for each row of a matrix."""
    complexity = Complexity(complexity)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    parts = [np.ones((xs.shape[0], 1)), xs]
    if complexity is Complexity.DIAGONAL:
        parts.append(xs * xs)
    elif complexity is Complexity.FULL:
        parts.append(kernels.quadratic_features(xs))
    elif complexity is not Complexity.LINEAR:
        raise ValueError("no features for an insufficient model")
    phi = np.hstack(parts)
    return phi[0] if single else phi


# ---------------------------------------------------------------------------
# target normalization


@dataclass(frozen=True)
class NormalizationConfig:
    """How regression targets are normalized.

    ``mode`` is ``"standard"``, ``"robust"`` or ``"none"`` (the last one is for
    tests and exact-recovery checks).
    """

    mode: str = "standard"
    v_clip: float = 3.0
    kurtosis_threshold: float = 0.55
    max_recursion: int = 10

    def __post_init__(self):
        if self.mode not in ("standard", "robust", "none"):
            raise ValueError(f"unknown normalization mode {self.mode!r}")
        if not self.v_clip > 0:
            raise ValueError("v_clip must be positive")
        if not self.kurtosis_threshold > 0:
            raise ValueError("kurtosis_threshold must be positive")
        if self.max_recursion < 1:
            raise ValueError("max_recursion must be a positive integer")


@dataclass(frozen=True)
class NormalizationLevel:
    center: float
    scale: float
    excess_kurtosis: float
    n_inside: int


@dataclass(frozen=True)
class NormalizationStats:
    mode: str
    levels: tuple[NormalizationLevel, ...]
    recursion_capped: bool = False
    clip_range: tuple[float, float] | None = None

    @property
    def center(self) -> float:
        return self.levels[0].center if self.levels else 0.0

    @property
    def scale(self) -> float:
        return self.levels[0].scale if self.levels else 1.0


def excess_kurtosis(values) -> float:
    """Population excess kurtosis ``m4 / m2**2 - 3``; NaN when undefined."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return math.nan
    c = v - v.mean()
    m2 = float(np.mean(c * c))
    if m2 <= 0.0:
        return math.nan
    return float(np.mean(c**4)) / (m2 * m2) - 3.0


def _check_spread(y: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not std > 4.0 * np.finfo(float).eps * float(np.max(np.abs(y))):
        raise DegenerateTargetsError("all targets are equal")
    return mean, std


def _robust(y: np.ndarray, cfg: NormalizationConfig, depth: int, levels: list) -> tuple[np.ndarray, bool]:
    mean = float(np.mean(y))
    std = float(np.std(y))
    z = (y - mean) / std
    inside = (-cfg.v_clip < z) & (z < cfg.v_clip)
    kurt = excess_kurtosis(z[inside])
    levels.append(NormalizationLevel(mean, std, kurt, int(inside.sum())))
    capped = False
    if kurt > cfg.kurtosis_threshold and abs(std - 1.0) > 1e-8:
        if depth < cfg.max_recursion:
            z[inside], capped = _robust(z[inside], cfg, depth + 1, levels)
        else:
            capped = True
    kept = z[inside]
    return np.clip(z, kept.min(), kept.max()), capped


def normalize_targets(y, cfg: NormalizationConfig) -> tuple[np.ndarray, NormalizationStats]:
    """Normalize regression targets.

    Standard mode standardizes with the population standard deviation.  Robust
    mode standardizes, then recursively re-standardizes the values inside
    ``(-v_clip, v_clip)`` while their excess kurtosis exceeds the threshold,
    and finally clips everything to the range of the values kept inside.

    Raises
    ------
    DegenerateTargetsError
        If all targets are equal.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size < 2:
        raise DegenerateTargetsError("need at least two targets")
    if cfg.mode == "none":
        return y.copy(), NormalizationStats("none", ())
    mean, std = _check_spread(y)
    if cfg.mode == "standard":
        level = NormalizationLevel(mean, std, excess_kurtosis(y), y.size)
        return (y - mean) / std, NormalizationStats("standard", (level,))
    levels: list[NormalizationLevel] = []
    out, capped = _robust(y, cfg, 0, levels)
    return out, NormalizationStats(
        "robust", tuple(levels), capped, (float(out.min()), float(out.max()))
    )


# ---------------------------------------------------------------------------
# buffer and whitening


class SampleBuffer:
    """Bounded FIFO of ``(x, y)`` pairs; the oldest entries are evicted first."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self._xs: deque[np.ndarray] = deque(maxlen=self.capacity)
        self._ys: deque[float] = deque(maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self._ys)

    def push(self, x, y: float) -> None:
        x = np.array(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise ValueError(f"expected a point of dimension {self.dim}")
        self._xs.append(x)
        self._ys.append(float(y))

    def extend(self, xs, ys) -> None:
        for x, y in zip(np.atleast_2d(xs), np.asarray(ys, dtype=float).reshape(-1)):
            self.push(x, y)

    def clear(self) -> None:
        self._xs.clear()
        self._ys.clear()

    @property
    def xs(self) -> np.ndarray:
        return np.array(self._xs).reshape(len(self), self.dim)

    @property
    def ys(self) -> np.ndarray:
        return np.array(self._ys, dtype=float)


@dataclass(frozen=True)
class WhiteningTransform:
    center: np.ndarray
    factor: np.ndarray
    jitter_used: float = 0.0

    @classmethod
    def identity(cls, n: int) -> "WhiteningTransform":
        return cls(np.zeros(n), np.eye(n), 0.0)

    @classmethod
    def from_samples(cls, xs) -> "WhiteningTransform":
        """Empirical mean and Cholesky factor of the (1/(Q-1)) empirical covariance.

        A jitter ladder proportional to the mean variance is tried when the
        covariance is singular; :class:`FitError` is raised when it runs out.
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[0] < 2:
            raise FitError("whitening needs at least two samples")
        center = xs.mean(axis=0)
        cov = np.atleast_2d(np.cov(xs, rowvar=False, ddof=1))
        level = float(np.mean(np.diag(cov)))
        if not (math.isfinite(level) and level > 0.0):
            raise FitError("sample covariance is degenerate")
        eye = np.eye(cov.shape[0])
        for rel in JITTER_LADDER:
            jitter = rel * level
            try:
                factor = np.linalg.cholesky(cov + jitter * eye)
            except np.linalg.LinAlgError:
                continue
            return cls(center, factor, jitter)
        raise FitError("sample covariance is singular beyond the jitter cap")

    def whiten(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return solve_triangular(self.factor, (x - self.center).T, lower=True).T


# ---------------------------------------------------------------------------
# surrogate


@dataclass(frozen=True)
class QuadraticSurrogate:
    """``f(x) ~ -1/2 x^T A x + x^T a + a0``; ``A`` is symmetrized on construction."""

    A: np.ndarray
    a: np.ndarray
    a0: float
    complexity: Complexity = Complexity.FULL
    uninformative: bool = False
    target_stats: NormalizationStats | None = field(default=None, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(-1))
        object.__setattr__(self, "a0", float(self.a0))
        if self.A.shape != (self.a.size, self.a.size):
            raise ValueError("A and a have inconsistent shapes")

    @property
    def dim(self) -> int:
        return self.a.size

    def predict(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        xs = np.atleast_2d(x)
        vals = -0.5 * np.einsum("ij,jk,ik->i", xs, self.A, xs) + xs @ self.a + self.a0
        return float(vals[0]) if x.ndim == 1 else vals

    def expected_value(self, mean, cov) -> float:
        """Expectation of the surrogate under N(mean, cov)."""
        mean = np.asarray(mean, dtype=float)
        return float(
            -0.5 * mean @ self.A @ mean - 0.5 * np.trace(self.A @ cov) + mean @ self.a + self.a0
        )

    def scaled(self, c: float) -> "QuadraticSurrogate":
        return QuadraticSurrogate(c * self.A, c * self.a, c * self.a0, self.complexity)


def coefficients_to_surrogate(beta, n: int, complexity) -> QuadraticSurrogate:
    """Map regression coefficients ordered as :func:`feature_map` to ``(A, a, a0)``.

    A coefficient ``c`` on ``x_i**2`` contributes ``A_ii = -2 c``; a coefficient
    on ``x_i x_j`` (i < j) contributes ``A_ij = A_ji = -c``.
    """
    complexity = Complexity(complexity)
    beta = np.asarray(beta, dtype=float)
    a0 = beta[0]
    a = beta[1 : n + 1]
    if complexity is Complexity.LINEAR:
        A = np.zeros((n, n))
    elif complexity is Complexity.DIAGONAL:
        A = -2.0 * np.diag(beta[n + 1 : 2 * n + 1])
    else:
        upper = np.zeros((n, n))
        upper[np.triu_indices(n)] = beta[n + 1 :]
        A = -(upper + upper.T)
    return QuadraticSurrogate(A, a, a0, complexity)


def unwhiten(model: QuadraticSurrogate, transform: WhiteningTransform) -> QuadraticSurrogate:
    """Express a surrogate fitted on whitened inputs in the original coordinates."""
    c = transform.factor
    xbar = transform.center
    half = solve_triangular(c, model.A, lower=True, trans="T")  # C^-T A_w
    A = solve_triangular(c, half.T, lower=True, trans="T").T  # C^-T A_w C^-1
    A = 0.5 * (A + A.T)
    lin = solve_triangular(c, model.a, lower=True, trans="T")  # C^-T a_w
    a = A @ xbar + lin
    a0 = model.a0 - 0.5 * xbar @ A @ xbar - xbar @ lin
    return QuadraticSurrogate(A, a, a0, model.complexity, model.uninformative, model.target_stats)


def _ridge(phi: np.ndarray, y: np.ndarray, ridge_lambda: float) -> np.ndarray:
    if ridge_lambda <= 0.0:
        return np.linalg.lstsq(phi, y, rcond=None)[0]
    gram = phi.T @ phi
    lam = ridge_lambda * np.trace(gram) / gram.shape[0]
    gram[np.diag_indices_from(gram)] += lam
    try:
        return cho_solve(cho_factor(gram), phi.T @ y)
    except np.linalg.LinAlgError:
        aug = np.vstack([phi, math.sqrt(lam) * np.eye(gram.shape[0])])
        return np.linalg.lstsq(aug, np.concatenate([y, np.zeros(gram.shape[0])]), rcond=None)[0]


def fit_samples(
    xs,
    ys,
    cfg: NormalizationConfig | None = None,
    ridge_lambda: float = 1e-8,
    *,
    whiten: bool = True,
    complexity: Complexity | str | None = None,
) -> QuadraticSurrogate:
    """Fit a quadratic surrogate to samples ``xs`` (rows) with targets ``ys``.

    ``ridge_lambda`` is relative: the penalty added to the Gram matrix is
    ``ridge_lambda * trace(Phi^T Phi) / p``.  With ``ridge_lambda == 0`` an
    ordinary least squares solve is used.  The returned surrogate models the
    normalized targets.  If all targets are equal the zero model is returned
    with ``uninformative=True``.
    """
    cfg = cfg or NormalizationConfig()
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.asarray(ys, dtype=float).reshape(-1)
    q, n = xs.shape
    if complexity is None:
        complexity = model_complexity(q, n)
    complexity = Complexity(complexity)
    if complexity is Complexity.INSUFFICIENT:
        raise FitError(f"{q} samples are not enough for a model in dimension {n}")

    transform = WhiteningTransform.from_samples(xs) if whiten else WhiteningTransform.identity(n)
    xw = transform.whiten(xs) if whiten else xs

    try:
        targets, stats = normalize_targets(ys, cfg)
    except DegenerateTargetsError:
        return QuadraticSurrogate(np.zeros((n, n)), np.zeros(n), 0.0, complexity, uninformative=True)

    phi = feature_map(xw, complexity)
    col_mean = phi[:, 1:].mean(axis=0)
    col_std = phi[:, 1:].std(axis=0)
    col_std[col_std <= 0.0] = 1.0
    phi_std = phi.copy()
    phi_std[:, 1:] = (phi[:, 1:] - col_mean) / col_std

    beta_std = _ridge(phi_std, targets, ridge_lambda)
    if not np.all(np.isfinite(beta_std)):
        raise FitError("ridge regression produced non-finite coefficients")
    beta = np.empty_like(beta_std)
    beta[1:] = beta_std[1:] / col_std
    beta[0] = beta_std[0] - beta[1:] @ col_mean

    model = coefficients_to_surrogate(beta, n, complexity)
    model = QuadraticSurrogate(model.A, model.a, model.a0, complexity, False, stats)
    return unwhiten(model, transform) if whiten else model


def fit(
    buffer: SampleBuffer,
    cfg: NormalizationConfig | None = None,
    ridge_lambda: float = 1e-8,
    *,
    whiten: bool = True,
    complexity: Complexity | str | None = None,
) -> QuadraticSurrogate:
    """Fit the surrogate on a snapshot of ``buffer``; see :func:`fit_samples`."""
    return fit_samples(
        buffer.xs, buffer.ys, cfg, ridge_lambda, whiten=whiten, complexity=complexity
    )
