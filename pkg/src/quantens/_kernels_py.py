"""Pure-Python implementations of the numerical kernels.

Mirrors ``_kernels.pyx`` function for function. Used when the compiled
extension is unavailable or ``QUANTENS_PURE_PYTHON=1`` is set.
"""
import math

import numpy as np
from scipy.special import ndtr

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_TWO_PI = 2.0 * math.pi

# Gauss-Kronrod 7/15 abscissae and weights
_XGK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WGK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
_WG = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)

OWENS_T_TOL = 1e-11
MAX_SEGMENTS = 200


def norm_cdf(z):
    return 0.5 * math.erfc(-z / _SQRT2)


def norm_pdf(z):
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def _gk15(hh, lo, hi):
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    fc = math.exp(-hh * (1.0 + center * center)) / (1.0 + center * center)
    resk = fc * _WGK[7]
    resg = fc * _WG[3]
    for j in range(7):
        dx = half * _XGK[j]
        x1 = center - dx
        x2 = center + dx
        f1 = math.exp(-hh * (1.0 + x1 * x1)) / (1.0 + x1 * x1)
        f2 = math.exp(-hh * (1.0 + x2 * x2)) / (1.0 + x2 * x2)
        resk += _WGK[j] * (f1 + f2)
        if j % 2 == 1:
            resg += _WG[j // 2] * (f1 + f2)
    return resk * half, abs((resk - resg) * half)


def owens_t(h, a):
    """Owen's T function by adaptive Gauss-Kronrod quadrature of its integral."""
    if a == 0.0:
        return 0.0
    sign = 1.0
    if a < 0.0:
        sign = -1.0
        a = -a
    hh = 0.5 * h * h
    if hh > 745.0:
        return 0.0
    total = 0.0
    stack = [(0.0, a)]
    segments = 0
    while stack:
        lo, hi = stack.pop()
        val, err = _gk15(hh, lo, hi)
        segments += 1
        if err <= OWENS_T_TOL * (hi - lo) / a or segments >= MAX_SEGMENTS:
            total += val
        else:
            mid = 0.5 * (lo + hi)
            stack.append((mid, hi))
            stack.append((lo, mid))
    return sign * total / _TWO_PI


def skewnorm_cdf(z, a):
    """CDF of the standard skew-normal with shape ``a`` at ``z``."""
    if a == 0.0:
        return norm_cdf(z)
    p = norm_cdf(z) - 2.0 * owens_t(z, a)
    if p < 0.0:
        return 0.0
    if p > 1.0:
        return 1.0
    return p


def skewnorm_ppf(alpha, a, ftol=1e-8):
    lo = -10.0
    hi = 10.0
    while skewnorm_cdf(lo, a) > alpha:
        lo *= 2.0
        if lo < -1e4:
            break
    while skewnorm_cdf(hi, a) < alpha:
        hi *= 2.0
        if hi > 1e4:
            break
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = skewnorm_cdf(mid, a)
        if abs(f - alpha) < ftol:
            break
        if f < alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * (1.0 + abs(mid)):
            break
    return mid


def skewnorm_sse_batch(params, levels, values, ftol=1e-8):
    """Squared quantile error of skew-normal candidates.

    ``params`` rows are ``(location, scale, shape)``.
    """
    params = np.asarray(params, dtype=float)
    out = np.empty(params.shape[0])
    for p in range(params.shape[0]):
        xi, omega, a = params[p, 0], params[p, 1], params[p, 2]
        if not omega > 0.0:
            out[p] = math.inf
            continue
        s = 0.0
        for alpha, v in zip(levels, values):
            r = xi + omega * skewnorm_ppf(alpha, a, ftol) - v
            s += r * r
        out[p] = s
    return out


def crps_gaussian(mu, sigma, w):
    z = (w - mu) / sigma
    return sigma * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - _INV_SQRT_PI)


def emos_objective_batch(params, medians, spread, obs, var_floor):
    """Mean Gaussian CRPS of EMOS candidates.

    ``params`` rows are ``(a, b_1..b_K, c, d)``; ``medians`` is days x models.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    medians = np.asarray(medians, dtype=float)
    spread = np.asarray(spread, dtype=float)
    obs = np.asarray(obs, dtype=float)
    n_models = medians.shape[1]
    mu = params[:, :1] + params[:, 1:1 + n_models] @ medians.T
    var = params[:, 1 + n_models, None] + params[:, 2 + n_models, None] * (spread * spread)
    sigma = np.sqrt(np.maximum(var, var_floor))
    z = (obs - mu) / sigma
    cdf = ndtr(z)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    crps = sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - _INV_SQRT_PI)
    return crps.mean(axis=1)


def qra_objective_batch(params, quantiles, obs, levels):
    """Mean quantile score of QRA candidates.

    ``quantiles`` is days x levels x models; ``params`` rows are slopes.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    quantiles = np.asarray(quantiles, dtype=float)
    obs = np.asarray(obs, dtype=float)
    levels = np.asarray(levels, dtype=float)
    q = np.einsum("tlk,pk->ptl", quantiles, params)
    w = obs[None, :, None]
    ind = (w < q).astype(float)
    scores = 2.0 * (ind - levels[None, None, :]) * (q - w)
    return scores.reshape(params.shape[0], -1).mean(axis=1)


def pair_abs_sum(x):
    """Sum of |x_i - x_j| over all ordered pairs."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for xi in x:
        total += float(np.abs(x - xi).sum())
    return total


def pl_mixture_cdf(x, levels, values, beta_lo, beta_hi, weights):
    """Weighted sum of piecewise-linear CDFs with exponential tails, at each ``x``."""
    x = np.ravel(np.asarray(x, dtype=float))
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=float)
    total = np.zeros_like(x)
    for a, q, blo, bhi, w in zip(levels, values, beta_lo, beta_hi, weights):
        idx = np.searchsorted(q, x, side="right")
        f = np.empty_like(x)
        low = idx == 0
        high = idx == q.size
        mid = ~(low | high)
        f[low] = a[0] * np.exp((x[low] - q[0]) / blo) if blo > 0 else 0.0
        f[high] = 1.0 - (1.0 - a[-1]) * np.exp(-(x[high] - q[-1]) / bhi) if bhi > 0 else 1.0
        j = idx[mid] - 1
        f[mid] = a[j] + (a[j + 1] - a[j]) * (x[mid] - q[j]) / (q[j + 1] - q[j])
        total += w * f
    return total
