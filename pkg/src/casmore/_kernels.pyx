# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels.  Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, exp, fabs, sqrt, isnan, isfinite, INFINITY

cnp.import_array()

MEAN = 0
COV = 1
JOINT = 2


cdef inline void _kl_and_slope(int kind, double s, const double[::1] dm,
                               const double[::1] bt, double w,
                               double* kl_out, double* slope_out) noexcept nogil:
    cdef Py_ssize_t i, n = dm.shape[0]
    cdef double den, r, x, dx
    cdef double kl = 0.0, slope = 0.0
    for i in range(n):
        den = dm[i] + s
        if kind != 1:
            r = bt[i] / den
            kl += 0.5 * r * r
            slope -= r * r / den
        if kind != 0:
            x = (w - dm[i]) / den
            dx = -x / den
            kl += 0.5 * (x - log1p(x))
            slope += 0.5 * x / (1.0 + x) * dx
    kl_out[0] = kl
    slope_out[0] = slope


cdef inline void _g_and_slope(int kind, double u, const double[::1] dm,
                              const double[::1] bt, double w, double log_eps,
                              double* s, double* kl, double* g, double* gs) noexcept nogil:
    cdef double slope
    s[0] = exp(u)
    _kl_and_slope(kind, s[0], dm, bt, w, kl, &slope)
    if kl[0] <= 0.0:
        g[0] = -INFINITY
        gs[0] = 0.0
    else:
        g[0] = log(kl[0]) - log_eps
        gs[0] = s[0] * slope / kl[0]


def solve_multiplier(int kind, dm, bt, double w, double eps, double s_lo,
                     double rtol=1e-10, int maxiter=200):
    cdef const double[::1] dv = np.ascontiguousarray(dm, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(bt, dtype=np.float64)
    cdef double kl_lo, slope, s, kl, g, gs, u, u_lo, u_hi, u_new, scale, bb
    cdef double s_hi, kl_hi, g_hi, log_eps
    cdef Py_ssize_t i, n = dv.shape[0]
    cdef int iters = 0
    cdef bint converged = True

    if kind != 1 and bv.shape[0] != n:
        raise ValueError("dm and bt must have the same length")
    with nogil:
        _kl_and_slope(kind, s_lo, dv, bv, w, &kl_lo, &slope)
    if not isnan(kl_lo) and kl_lo <= eps:
        return s_lo, kl_lo, 0, True
    log_eps = log(eps)

    with nogil:
        scale = fabs(w)
        for i in range(n):
            if fabs(dv[i]) > scale:
                scale = fabs(dv[i])
        if kind != 1:
            bb = 0.0
            for i in range(n):
                bb += bv[i] * bv[i]
            bb = sqrt(bb / (2.0 * eps))
            if bb > scale:
                scale = bb
        if scale < 2.0 * s_lo:
            scale = 2.0 * s_lo
        if scale < 1e-300:
            scale = 1e-300
        u_lo = log(s_lo)
        u = log(scale)
        _g_and_slope(kind, u, dv, bv, w, log_eps, &s, &kl, &g, &gs)
        while kl > eps:
            u_lo = u
            u += 2.0
            _g_and_slope(kind, u, dv, bv, w, log_eps, &s, &kl, &g, &gs)
            iters += 1
            if iters >= maxiter or not isfinite(u):
                converged = False
                break
        u_hi = u
        s_hi = s
        kl_hi = kl
        g_hi = g
        if converged:
            while g_hi < -1e-13 and (u_hi - u_lo) > rtol:
                if iters >= maxiter:
                    converged = False
                    break
                iters += 1
                if gs < 0.0 and isfinite(g):
                    u_new = u - g / gs
                    if not (u_lo < u_new < u_hi):
                        u_new = 0.5 * (u_lo + u_hi)
                else:
                    u_new = 0.5 * (u_lo + u_hi)
                if kl > eps and u_new - u < 0.25 * rtol:
                    u_new = u + 0.5 * rtol
                    if u_new > 0.5 * (u_lo + u_hi):
                        u_new = 0.5 * (u_lo + u_hi)
                if u_new == u_lo or u_new == u_hi:
                    break
                u = u_new
                _g_and_slope(kind, u, dv, bv, w, log_eps, &s, &kl, &g, &gs)
                if isnan(g):
                    converged = False
                    break
                if kl > eps:
                    u_lo = u
                else:
                    u_hi = u
                    s_hi = s
                    kl_hi = kl
                    g_hi = g
    return s_hi, kl_hi, iters, bool(converged)


def quadratic_features(x):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t rows = xv.shape[0], n = xv.shape[1]
    cdef Py_ssize_t r, i, j, k
    out = np.empty((rows, n * (n + 1) // 2), dtype=np.float64)
    cdef double[:, ::1] ov = out
    with nogil:
        for r in range(rows):
            k = 0
            for i in range(n):
                for j in range(i, n):
                    ov[r, k] = xv[r, i] * xv[r, j]
                    k += 1
    return out
