# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels. See ``_kernels_py.py`` for the reference twin."""
import numpy as np

from libc.math cimport erfc, exp, fabs, sqrt, INFINITY

cdef double SQRT2 = 1.4142135623730951
cdef double INV_SQRT_PI = 0.5641895835477563
cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double TWO_PI = 6.283185307179586

cdef double OWENS_T_TOL = 1e-11
cdef int MAX_SEGMENTS = 200

cdef double XGK[8]
cdef double WGK[8]
cdef double WG[4]
XGK[:] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
]
WGK[:] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
]
WG[:] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
]


cdef inline double _norm_cdf(double z) nogil:
    return 0.5 * erfc(-z / SQRT2)


cdef inline double _norm_pdf(double z) nogil:
    return INV_SQRT_2PI * exp(-0.5 * z * z)


cdef inline double _integrand(double hh, double x) nogil:
    cdef double q = 1.0 + x * x
    return exp(-hh * q) / q


cdef void _gk15(double hh, double lo, double hi, double* val, double* err) nogil:
    cdef double center = 0.5 * (lo + hi)
    cdef double half = 0.5 * (hi - lo)
    cdef double fc = _integrand(hh, center)
    cdef double resk = fc * WGK[7]
    cdef double resg = fc * WG[3]
    cdef double dx, f1, f2
    cdef int j
    for j in range(7):
        dx = half * XGK[j]
        f1 = _integrand(hh, center - dx)
        f2 = _integrand(hh, center + dx)
        resk += WGK[j] * (f1 + f2)
        if j % 2 == 1:
            resg += WG[j // 2] * (f1 + f2)
    val[0] = resk * half
    err[0] = fabs((resk - resg) * half)


cdef double _owens_t(double h, double a) nogil:
    cdef double sign = 1.0
    cdef double hh, total, lo, hi, mid, val, err
    cdef double stack_lo[64]
    cdef double stack_hi[64]
    cdef int top, segments
    if a == 0.0:
        return 0.0
    if a < 0.0:
        sign = -1.0
        a = -a
    hh = 0.5 * h * h
    if hh > 745.0:
        return 0.0
    total = 0.0
    top = 0
    stack_lo[0] = 0.0
    stack_hi[0] = a
    top = 1
    segments = 0
    while top > 0:
        top -= 1
        lo = stack_lo[top]
        hi = stack_hi[top]
        _gk15(hh, lo, hi, &val, &err)
        segments += 1
        if err <= OWENS_T_TOL * (hi - lo) / a or segments >= MAX_SEGMENTS or top >= 62:
            total += val
        else:
            mid = 0.5 * (lo + hi)
            stack_lo[top] = mid
            stack_hi[top] = hi
            top += 1
            stack_lo[top] = lo
            stack_hi[top] = mid
            top += 1
    return sign * total / TWO_PI


cdef double _skewnorm_cdf(double z, double a) nogil:
    cdef double p
    if a == 0.0:
        return _norm_cdf(z)
    p = _norm_cdf(z) - 2.0 * _owens_t(z, a)
    if p < 0.0:
        return 0.0
    if p > 1.0:
        return 1.0
    return p


cdef double _skewnorm_ppf(double alpha, double a, double ftol) nogil:
    cdef double lo = -10.0
    cdef double hi = 10.0
    cdef double mid, f
    cdef int it
    while _skewnorm_cdf(lo, a) > alpha:
        lo *= 2.0
        if lo < -1e4:
            break
    while _skewnorm_cdf(hi, a) < alpha:
        hi *= 2.0
        if hi > 1e4:
            break
    mid = 0.5 * (lo + hi)
    for it in range(200):
        mid = 0.5 * (lo + hi)
        f = _skewnorm_cdf(mid, a)
        if fabs(f - alpha) < ftol:
            break
        if f < alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * (1.0 + fabs(mid)):
            break
    return mid


def norm_cdf(double z):
    return _norm_cdf(z)


def norm_pdf(double z):
    return _norm_pdf(z)


def owens_t(double h, double a):
    """Owen's T function by adaptive Gauss-Kronrod quadrature of its integral."""
    return _owens_t(h, a)


def skewnorm_cdf(double z, double a):
    """CDF of the standard skew-normal with shape ``a`` at ``z``."""
    return _skewnorm_cdf(z, a)


def skewnorm_ppf(double alpha, double a, double ftol=1e-8):
    return _skewnorm_ppf(alpha, a, ftol)


def skewnorm_sse_batch(params, levels, values, double ftol=1e-8):
    cdef double[:, ::1] P = np.ascontiguousarray(params, dtype=np.float64)
    cdef double[::1] L = np.ascontiguousarray(levels, dtype=np.float64)
    cdef double[::1] V = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], m = L.shape[0], p, j
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double xi, omega, a, r, s
    with nogil:
        for p in range(n):
            xi = P[p, 0]
            omega = P[p, 1]
            a = P[p, 2]
            if not omega > 0.0:
                out[p] = INFINITY
                continue
            s = 0.0
            for j in range(m):
                r = xi + omega * _skewnorm_ppf(L[j], a, ftol) - V[j]
                s += r * r
            out[p] = s
    return out_arr


cdef inline double _crps_gaussian(double mu, double sigma, double w) nogil:
    cdef double z = (w - mu) / sigma
    return sigma * (z * (2.0 * _norm_cdf(z) - 1.0) + 2.0 * _norm_pdf(z) - INV_SQRT_PI)


def crps_gaussian(double mu, double sigma, double w):
    return _crps_gaussian(mu, sigma, w)


def emos_objective_batch(params, medians, spread, obs, double var_floor):
    cdef double[:, ::1] P = np.ascontiguousarray(np.atleast_2d(params), dtype=np.float64)
    cdef double[:, ::1] M = np.ascontiguousarray(medians, dtype=np.float64)
    cdef double[::1] S = np.ascontiguousarray(spread, dtype=np.float64)
    cdef double[::1] Y = np.ascontiguousarray(obs, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], T = M.shape[0], K = M.shape[1], p, t, k
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double mu, var, total
    with nogil:
        for p in range(n):
            total = 0.0
            for t in range(T):
                mu = P[p, 0]
                for k in range(K):
                    mu += P[p, 1 + k] * M[t, k]
                var = P[p, 1 + K] + P[p, 2 + K] * S[t] * S[t]
                if var < var_floor:
                    var = var_floor
                total += _crps_gaussian(mu, sqrt(var), Y[t])
            out[p] = total / T
    return out_arr


def qra_objective_batch(params, quantiles, obs, levels):
    cdef double[:, ::1] P = np.ascontiguousarray(np.atleast_2d(params), dtype=np.float64)
    cdef double[:, :, ::1] Q = np.ascontiguousarray(quantiles, dtype=np.float64)
    cdef double[::1] Y = np.ascontiguousarray(obs, dtype=np.float64)
    cdef double[::1] A = np.ascontiguousarray(levels, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], T = Q.shape[0], L = Q.shape[1], K = Q.shape[2]
    cdef Py_ssize_t p, t, j, k
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double q, w, ind, total
    with nogil:
        for p in range(n):
            total = 0.0
            for t in range(T):
                w = Y[t]
                for j in range(L):
                    q = 0.0
                    for k in range(K):
                        q += P[p, k] * Q[t, j, k]
                    ind = 1.0 if w < q else 0.0
                    total += 2.0 * (ind - A[j]) * (q - w)
            out[p] = total / (T * L)
    return out_arr


def pair_abs_sum(x):
    """Sum of |x_i - x_j| over all ordered pairs."""
    cdef double[::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t m = X.shape[0], i, j
    cdef double total = 0.0
    with nogil:
        for i in range(m):
            for j in range(m):
                total += fabs(X[i] - X[j])
    return total


def pl_mixture_cdf(x, levels, values, beta_lo, beta_hi, weights):
    """Weighted sum of piecewise-linear CDFs with exponential tails, at each ``x``."""
    cdef double[::1] X = np.ascontiguousarray(np.ravel(x), dtype=np.float64)
    cdef double[:, ::1] A = np.ascontiguousarray(levels, dtype=np.float64)
    cdef double[:, ::1] Q = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] BL = np.ascontiguousarray(beta_lo, dtype=np.float64)
    cdef double[::1] BH = np.ascontiguousarray(beta_hi, dtype=np.float64)
    cdef double[::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], K = Q.shape[0], L = Q.shape[1]
    cdef Py_ssize_t i, k, lo, hi, mid
    cdef double xv, f, total
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            xv = X[i]
            total = 0.0
            for k in range(K):
                # first index with Q[k, idx] > xv
                lo = 0
                hi = L
                while lo < hi:
                    mid = (lo + hi) // 2
                    if Q[k, mid] > xv:
                        hi = mid
                    else:
                        lo = mid + 1
                if lo == 0:
                    f = A[k, 0] * exp((xv - Q[k, 0]) / BL[k]) if BL[k] > 0.0 else 0.0
                elif lo == L:
                    f = 1.0 - (1.0 - A[k, L - 1]) * exp(-(xv - Q[k, L - 1]) / BH[k]) if BH[k] > 0.0 else 1.0
                else:
                    f = A[k, lo - 1] + (A[k, lo] - A[k, lo - 1]) * (xv - Q[k, lo - 1]) / (Q[k, lo] - Q[k, lo - 1])
                total += W[k] * f
            out[i] = total
    return out_arr
