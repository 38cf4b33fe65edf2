"""Entropy control.

Two mechanisms live here: the evolution-path step-size adaptation used by
CAS-MORE, which rescales the covariance after each update, and the fixed
entropy-bound schedules of the original MORE algorithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .gaussian import GaussianSearchDist

SIGMA_FLOOR = 1e-12


def desired_path_length(prev_des: float, c_sigma: float, theta: float = 3 * math.pi / 8) -> float:
    """Length of ``(1 - c) p + sqrt(c (2 - c)) u`` for ``|p| = prev_des``, ``|u| = 1`` at angle ``theta``."""
    if prev_des < 0:
        raise ValueError("previous desired length must be non-negative")
    decay = 1.0 - c_sigma
    gain = math.sqrt(c_sigma * (2.0 - c_sigma))
    sq = (decay * prev_des) ** 2 + gain**2 + 2.0 * decay * prev_des * gain * math.cos(theta)
    return math.sqrt(sq)


@dataclass
class EvolutionPathState:
    """Smoothed whitened mean displacement and its desired length.

    ``desired_len`` starts at zero and is advanced alongside the path, so after
    ``t`` updates it is the length of a path built from ``t`` bound-length
    steps at the fixed angle ``theta``.
    """

    dim: int
    c_sigma: float
    alpha: float = 1.0
    theta: float = 3 * math.pi / 8
    path: np.ndarray = field(default=None)  # type: ignore[assignment]
    desired_len: float = 0.0
    t: int = 0

    def __post_init__(self):
        if not 0.0 < self.c_sigma < 1.0:
            raise ValueError("c_sigma must lie in (0, 1)")
        if self.path is None:
            self.path = np.zeros(self.dim)
        self.path = np.asarray(self.path, dtype=float).reshape(self.dim)

    @property
    def path_norm(self) -> float:
        return float(np.linalg.norm(self.path))

    def copy(self) -> "EvolutionPathState":
        return replace(self, path=self.path.copy())


def update_path(
    state: EvolutionPathState, old_dist: GaussianSearchDist, new_mean, eps_mu: float
) -> EvolutionPathState:
    """Advance the evolution path by one mean update (returns a new state)."""
    c = state.c_sigma
    step = solve_triangular(old_dist.chol, np.asarray(new_mean, dtype=float) - old_dist.mean, lower=True)
    gain = math.sqrt(c * (2.0 - c) / (2.0 * eps_mu))
    path = (1.0 - c) * state.path + gain * step
    desired = desired_path_length(state.desired_len, c, state.theta)
    return replace(state, path=path, desired_len=desired, t=state.t + 1)


def entropy_delta(state: EvolutionPathState) -> float:
    """Entropy reduction for the next covariance scaling; positive means shrink."""
    if not state.desired_len > 0:
        raise ValueError("desired path length must be positive")
    return state.alpha * (1.0 - state.path_norm / state.desired_len)


def apply_sigma(dist: GaussianSearchDist, delta: float, n: int | None = None) -> tuple[GaussianSearchDist, float, bool]:
    """Scale the covariance by ``sigma**2`` with ``sigma = exp(-delta / n)``.

    The entropy changes by exactly ``-delta`` unless ``sigma`` falls below
    :data:`SIGMA_FLOOR`, in which case it is clamped.  Returns
    ``(new_dist, sigma, clamped)``.
    """
    n = dist.dim if n is None else n
    sigma = math.exp(-delta / n)
    clamped = sigma < SIGMA_FLOOR
    if clamped:
        sigma = SIGMA_FLOOR
    if sigma == 1.0:
        return dist, sigma, clamped
    return GaussianSearchDist(dist.mean, sigma * sigma * dist.cov), sigma, clamped


@dataclass(frozen=True)
class BaselineEntropyConfig:
    """Entropy lower-bound schedule of the original MORE algorithm.

    ``percentage``: ``beta = gamma (H - h_min) + h_min``;
    ``linear``: ``beta = max(H - delta_lin, h_min)``.
    """

    mode: str = "linear"
    gamma: float = 0.99
    delta_lin: float = 0.1
    h_min: float = -math.inf

    def __post_init__(self):
        if self.mode not in ("percentage", "linear"):
            raise ValueError(f"unknown entropy schedule {self.mode!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not self.delta_lin > 0:
            raise ValueError("delta_lin must be positive")
        if self.mode == "percentage" and not math.isfinite(self.h_min):
            raise ValueError("percentage schedule needs a finite minimum entropy")


def baseline_beta(cfg: BaselineEntropyConfig, current_entropy: float) -> float:
    if cfg.mode == "percentage":
        return cfg.gamma * (current_entropy - cfg.h_min) + cfg.h_min
    return max(current_entropy - cfg.delta_lin, cfg.h_min)
