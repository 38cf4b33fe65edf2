"""Pure-Python implementation of the numerical kernels.

Mirrors ``_kernels.pyx`` function by function; ``casmore.kernels`` picks one
of the two at import time.

The multiplier solvers work in the eigenbasis of the surrogate curvature
expressed in the whitened coordinates of the old distribution, where every
KL term is a sum over eigenvalues (and projected gradients ``bt``).
"""

from __future__ import annotations

import math

import numpy as np

MEAN = 0
COV = 1
JOINT = 2


def _kl_and_slope(kind: int, s: float, dm: np.ndarray, bt: np.ndarray, w: float):
    """KL divergence at pole offset ``s`` and its derivative with respect to ``s``."""
    den = dm + s
    kl = 0.0
    slope = 0.0
    if kind != COV:
        r = bt / den
        kl += 0.5 * float(r @ r)
        slope -= float(r @ (r / den))
    if kind != MEAN:
        # x = ratio - 1, the eigenvalue ratio of new to old covariance minus one
        x = (w - dm) / den
        dx = -x / den
        kl += 0.5 * float(np.sum(x - np.log1p(x)))
        slope += 0.5 * float(np.sum(x / (1.0 + x) * dx))
    return kl, slope


def solve_multiplier(kind, dm, bt, w, eps, s_lo, rtol=1e-10, maxiter=200):
    """Find the multiplier at which the KL divergence equals ``eps``.

    The multiplier is written as ``t = m + s`` where ``m`` is the smallest
    value keeping the updated precision positive definite.  The caller passes
    the shifted eigenvalues ``dm = d + m`` (all non-negative) and, for the
    covariance terms, the shifted reference ``w`` (``m`` for ``COV`` and
    ``omega + m`` for ``JOINT``), so every denominator ``dm + s`` is formed
    without cancellation.  The search runs over ``s > s_lo``.

    The KL divergence is non-increasing in ``s``.  If it is already at most
    ``eps`` at ``s_lo`` the constraint is inactive and ``s_lo`` is returned.
    Otherwise a Newton iteration on ``log KL(exp(u)) - log eps`` runs inside a
    bisection bracket, and the feasible end of the final bracket is returned.

    Returns ``(s, kl, iterations, converged)``.
    """
    dm = np.ascontiguousarray(dm, dtype=float)
    bt = np.ascontiguousarray(bt, dtype=float)
    kl_lo, _ = _kl_and_slope(kind, s_lo, dm, bt, w)
    if not math.isnan(kl_lo) and kl_lo <= eps:
        return s_lo, kl_lo, 0, True
    log_eps = math.log(eps)

    def g_and_slope(u):
        s = math.exp(u)
        kl, slope = _kl_and_slope(kind, s, dm, bt, w)
        if kl <= 0.0:
            return s, kl, -math.inf, 0.0
        return s, kl, math.log(kl) - log_eps, s * slope / kl

    scale = max(float(np.max(np.abs(dm))) if dm.size else 0.0, abs(w))
    if kind != COV:
        scale = max(scale, math.sqrt(float(bt @ bt) / (2.0 * eps)))
    u_lo = math.log(s_lo)
    u = math.log(max(2.0 * s_lo, scale, 1e-300))
    s, kl, g, slope = g_and_slope(u)
    iters = 0
    while kl > eps:
        u_lo = u
        u += 2.0
        s, kl, g, slope = g_and_slope(u)
        iters += 1
        if iters >= maxiter or not math.isfinite(u):
            return s, kl, iters, False
    u_hi, s_hi, kl_hi, g_hi = u, s, kl, g
    # stop once the feasible end matches eps to ~1e-13 or the bracket is rtol wide
    while g_hi < -1e-13 and (u_hi - u_lo) > rtol:
        if iters >= maxiter:
            return s_hi, kl_hi, iters, False
        iters += 1
        if slope < 0.0 and math.isfinite(g):
            u_new = u - g / slope
            if not (u_lo < u_new < u_hi):
                u_new = 0.5 * (u_lo + u_hi)
        else:
            u_new = 0.5 * (u_lo + u_hi)
        if kl > eps and u_new - u < 0.25 * rtol:
            # Newton creeps up from the infeasible side; probe just past the root
            u_new = min(u + 0.5 * rtol, 0.5 * (u_lo + u_hi))
        if u_new in (u_lo, u_hi):  # bracket exhausted at double precision
            break
        u = u_new
        s, kl, g, slope = g_and_slope(u)
        if math.isnan(g):
            return s_hi, kl_hi, iters, False
        if kl > eps:
            u_lo = u
        else:
            u_hi, s_hi, kl_hi, g_hi = u, s, kl, g
    return s_hi, kl_hi, iters, True


def quadratic_features(x: np.ndarray) -> np.ndarray:
    """All monomials ``x_i x_j`` with ``i <= j`` in row-major order, one row per point."""
    x = np.asarray(x, dtype=float)
    iu, ju = np.triu_indices(x.shape[1])
    return x[:, iu] * x[:, ju]
