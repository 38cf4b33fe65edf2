"""Closed-form KL trust-region updates of a Gaussian under a quadratic surrogate.

All three solvers work in the frame ``x = mean_t + L z`` where ``L`` is the
Cholesky factor of the old covariance.  There the old distribution is a
standard normal, the surrogate curvature becomes ``B = L^T A L`` and its
gradient at the old mean becomes ``b = L^T (a - A mean_t)``.  After one
eigendecomposition of ``B`` every dual and KL term is a sum over eigenvalues,
so each multiplier is found by a scalar root search (see :mod:`casmore.kernels`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .errors import DimensionMismatchError, OracleError, SolverError
from .gaussian import GaussianSearchDist, entropy
from .surrogate import QuadraticSurrogate

RTOL = 1e-10
MAXITER = 200
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MeanDualSolution:
    lambda_star: float
    new_mean: np.ndarray
    kl_achieved: float
    dual_value: float
    converged: bool
    active: bool
    iterations: int = 0


@dataclass(frozen=True)
class CovDualSolution:
    nu_star: float
    new_cov: np.ndarray
    kl_achieved: float
    dual_value: float
    converged: bool
    active: bool
    iterations: int = 0


@dataclass(frozen=True)
class JointDualSolution:
    eta_star: float
    omega_star: float
    new_dist: GaussianSearchDist
    kl_achieved: float
    dual_value: float


@dataclass(frozen=True)
class _Frame:
    chol: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    grad: np.ndarray  # eigenbasis coordinates of the whitened gradient at the old mean

    @property
    def shift(self) -> float:
        """Smallest multiplier keeping ``B + t I`` positive semidefinite."""
        return max(0.0, -float(self.eigvals.min()))

    @property
    def shifted(self) -> np.ndarray:
        return self.eigvals + self.shift

    def offset_floor(self) -> float:
        return max(1e-12, 1e-12 * self.shift)

    def to_original(self, z_eig: np.ndarray) -> np.ndarray:
        return self.chol @ (self.eigvecs @ z_eig)

    def cov_from_ratios(self, ratios: np.ndarray) -> np.ndarray:
        w = self.chol @ self.eigvecs
        cov = (w * ratios) @ w.T
        return 0.5 * (cov + cov.T)


def _frame(old: GaussianSearchDist, model: QuadraticSurrogate) -> _Frame:
    if model.dim != old.dim:
        raise DimensionMismatchError(f"surrogate has dimension {model.dim}, distribution {old.dim}")
    chol = old.chol
    B = chol.T @ model.A @ chol
    d, U = np.linalg.eigh(0.5 * (B + B.T))
    grad = U.T @ (chol.T @ (model.a - model.A @ old.mean))
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(grad))):
        raise SolverError("surrogate parameters are not finite")
    return _Frame(chol, d, U, grad)


def _root(kind, frame, w, eps):
    """Offset ``s`` of the multiplier ``shift + s`` at which the KL equals ``eps``."""
    s, kl, iters, ok = kernels.solve_multiplier(
        kind, frame.shifted, frame.grad, w, eps, frame.offset_floor(), RTOL, MAXITER
    )
    if not ok:
        raise SolverError(f"multiplier search did not converge after {iters} iterations")
    if not (math.isfinite(s) and math.isfinite(kl)):
        raise SolverError("multiplier search produced non-finite values")
    return s, kl, iters


def solve_mean_update(old: GaussianSearchDist, model: QuadraticSurrogate, eps_mu: float) -> MeanDualSolution:
    """Maximize the surrogate over the mean, KL-bounded by ``eps_mu`` with the covariance fixed.

    The dual ``g(lam) = lam eps + 1/2 (m(lam)^T M(lam)^-1 m(lam) - lam m_t^T M_t^-1 m_t)``
    is convex with derivative ``eps - KL(lam)``, so its minimizer is the root
    of ``KL(lam) = eps`` unless the KL is already below the bound at the lower
    end of the domain (the surrogate optimum lies inside the trust region).
    """
    if not eps_mu > 0:
        raise ValueError("eps_mu must be positive")
    frame = _frame(old, model)
    s, _, iters = _root(kernels.MEAN, frame, 0.0, eps_mu)
    lam = frame.shift + s
    z = frame.grad / (frame.shifted + s)
    kl = 0.5 * float(z @ z)
    new_mean = old.mean + frame.to_original(z)
    mu = old.mean
    base = -0.5 * mu @ model.A @ mu + mu @ model.a
    dual = lam * eps_mu + 0.5 * float(frame.grad @ z) + base
    if not (np.all(np.isfinite(new_mean)) and math.isfinite(dual)):
        raise SolverError("mean update produced non-finite values")
    return MeanDualSolution(lam, new_mean, kl, float(dual), True, s > frame.offset_floor(), iters)


def solve_cov_update(old: GaussianSearchDist, model: QuadraticSurrogate, eps_sigma: float) -> CovDualSolution:
    """Maximize the surrogate over the covariance, KL-bounded by ``eps_sigma`` with the mean fixed.

    The new covariance is ``nu (nu Sigma_t^-1 + A)^-1``; in the eigenframe its
    eigenvalue ratios to the old covariance are ``nu / (nu + d_i)``.
    """
    if not eps_sigma > 0:
        raise ValueError("eps_sigma must be positive")
    frame = _frame(old, model)
    m = frame.shift
    s, _, iters = _root(kernels.COV, frame, m, eps_sigma)
    nu = m + s
    if not s > frame.offset_floor():
        # zero curvature: the covariance does not move
        return CovDualSolution(nu, np.array(old.cov), 0.0, nu * eps_sigma, True, False, iters)
    den = frame.shifted + s
    x = (m - frame.shifted) / den
    kl = 0.5 * float(np.sum(x - np.log1p(x)))
    new_cov = frame.cov_from_ratios(nu / den)
    dual = nu * eps_sigma + 0.5 * nu * float(np.sum(np.log1p(x)))
    if not (np.all(np.isfinite(new_cov)) and math.isfinite(dual)):
        raise SolverError("covariance update produced non-finite values")
    return CovDualSolution(nu, new_cov, kl, float(dual), True, True, iters)


def _joint_entropy_gain(frame: _Frame, s: float, omega: float) -> float:
    return 0.5 * float(np.sum(np.log((frame.shift + s + omega) / (frame.shifted + s))))


def solve_joint_more_update(
    old: GaussianSearchDist, model: QuadraticSurrogate, eps: float, beta: float
) -> JointDualSolution:
    """Original MORE update: one KL bound ``eps`` on the joint change and entropy at least ``beta``.

    The new natural parameters are ``Lambda = (eta Lambda_t + A) / (eta + omega)`` and
    ``m = (eta m_t + a) / (eta + omega)``.  For fixed ``omega`` the optimal
    ``eta`` solves ``KL = eps``; ``omega`` is then found by a bracketed root
    search on ``entropy = beta``, which is increasing in ``omega``.
    Pass ``beta = -inf`` to drop the entropy constraint.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    frame = _frame(old, model)
    m = frame.shift
    h_old = entropy(old)

    def offset_for(omega: float) -> float:
        return _root(kernels.JOINT, frame, omega + m, eps)[0]

    omega = 0.0
    s = offset_for(0.0)
    if math.isfinite(beta) and h_old + _joint_entropy_gain(frame, s, 0.0) < beta:
        def gap(w):
            return h_old + _joint_entropy_gain(frame, offset_for(w), w) - beta

        hi = max(1.0, float(np.max(np.abs(frame.eigvals))))
        for _ in range(MAXITER):
            if gap(hi) >= 0.0:
                break
            hi *= 4.0
        else:
            raise SolverError("could not bracket the entropy multiplier")
        omega = brentq(gap, 0.0, hi, xtol=1e-300, rtol=1e-13, maxiter=MAXITER)
        s = offset_for(omega)

    eta = m + s
    den = frame.shifted + s
    z = frame.grad / den
    ratios = (eta + omega) / den
    new_dist = GaussianSearchDist(old.mean + frame.to_original(z), frame.cov_from_ratios(ratios))
    x = (m + omega - frame.shifted) / den
    kl = 0.5 * float(np.sum(x - np.log1p(x)) + z @ z)
    dual = joint_dual_value(old, model, eps, beta, eta, omega, new_dist)
    return JointDualSolution(eta, omega, new_dist, kl, dual)


def joint_dual_value(old, model, eps, beta, eta, omega, new_dist) -> float:
    """MORE dual ``g(eta, omega)`` evaluated at the distribution it induces (``a0`` included)."""
    k = old.dim
    prec_old = old.precision()
    prec_new = new_dist.precision()
    old_term = old.log_det_cov() + old.mean @ prec_old @ old.mean
    new_term = new_dist.log_det_cov() + new_dist.mean @ prec_new @ new_dist.mean
    value = eta * eps + 0.5 * (-eta * old_term + (eta + omega) * new_term) + model.a0
    if omega > 0.0:
        value += -omega * beta + 0.5 * omega * k * _LOG_2PI
    return float(value)


def compatible_features(xs, dist: GaussianSearchDist) -> np.ndarray:
    """Score-function features ``[1, x - mean, -1/2 vech((x - mean)(x - mean)^T)]``.

    Off-diagonal entries appear once with weight ``-1`` (both symmetric
    positions combined) so that their coefficients are entries of ``A``.
    """
    c = np.atleast_2d(np.asarray(xs, dtype=float)) - dist.mean
    iu, ju = np.triu_indices(dist.dim)
    weight = np.where(iu == ju, -0.5, -1.0)
    return np.hstack([np.ones((c.shape[0], 1)), c, c[:, iu] * c[:, ju] * weight])


def _coefficients_to_model(beta: np.ndarray, dist: GaussianSearchDist):
    n = dist.dim
    b0, b1 = beta[0], beta[1 : n + 1]
    upper = np.zeros((n, n))
    upper[np.triu_indices(n)] = beta[n + 1 :]
    A = upper + np.triu(upper, 1).T
    mu = dist.mean
    a = b1 + A @ mu
    a0 = b0 - b1 @ mu - 0.5 * mu @ A @ mu
    return A, a, float(a0)


def natural_gradient_oracle(samples, dist: GaussianSearchDist):
    """Unregularized least squares on compatible features, returned as ``(A, a, a0)``.

    ``samples`` is a pair ``(xs, ys)``.  The coefficients are the sample-based
    natural gradient of the expected fitness with respect to the natural
    parameters of ``dist``.  Intended as a test oracle.
    """
    xs, ys = samples
    phi = compatible_features(xs, dist)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if phi.shape[0] < phi.shape[1] or np.linalg.matrix_rank(phi) < phi.shape[1]:
        raise OracleError("compatible features are rank deficient")
    beta = np.linalg.lstsq(phi, ys, rcond=None)[0]
    return _coefficients_to_model(beta, dist)
