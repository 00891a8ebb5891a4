"""Continuous distributions reconstructed from reported quantiles.

Two component representations are supported: a fitted skew-normal and a
piecewise-linear quantile function with exponential tails. Both expose
``cdf``, ``pdf`` and ``quantile`` so mixtures can be inverted by bisection.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

from quantens import kernels
from quantens.core import QuantileForecast, level_key
from quantens.pso import PsoConfig, minimize

logger = logging.getLogger(__name__)

SKEW_SHAPE_BOUND = 10.0
BISECTION_FTOL = 1e-8


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class SkewNormalParams:
    location: float
    scale: float
    shape: float

    def __post_init__(self):
        for v in (self.location, self.scale, self.shape):
            if not math.isfinite(v):
                raise ValueError("skew-normal parameters must be finite")
        if not self.scale > 0.0:
            raise ValueError(f"skew-normal scale must be positive, got {self.scale}")

    def cdf(self, x):
        return _vectorize(lambda v: skewnormal_cdf(self, v), x)

    def pdf(self, x):
        def one(v):
            z = (v - self.location) / self.scale
            return 2.0 / self.scale * kernels.norm_pdf(z) * kernels.norm_cdf(self.shape * z)
        return _vectorize(one, x)

    def quantile(self, alpha):
        return _vectorize(lambda a: skewnormal_quantile(self, a), alpha)

    @property
    def spread(self):
        return self.scale


class SkewNormalFit(NamedTuple):
    params: SkewNormalParams
    rms: float


def _vectorize(fn, x):
    if np.ndim(x) == 0:
        return fn(float(x))
    arr = np.asarray(x, dtype=float)
    return np.array([fn(float(v)) for v in arr.ravel()]).reshape(arr.shape)


def skewnormal_cdf(params: SkewNormalParams, x: float) -> float:
    """Skew-normal CDF, ``Phi(z) - 2 T(z, shape)`` with Owen's T integrated adaptively."""
    z = (x - params.location) / params.scale
    return kernels.skewnorm_cdf(z, params.shape)


def skewnormal_quantile(params: SkewNormalParams, alpha: float, ftol: float = BISECTION_FTOL) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha {alpha} outside (0, 1)")
    return params.location + params.scale * kernels.skewnorm_ppf(alpha, params.shape, ftol)


def fit_skewnormal(forecast: QuantileForecast, config: PsoConfig | None = None) -> SkewNormalFit:
    """Least-squares skew-normal fit to the reported quantiles via the swarm.

    The search box is scaled from the reported spread. Returns the parameters
    together with the RMS quantile residual.
    """
    levels, values = forecast.as_arrays()
    if len(levels) < 3:
        raise FitError(
            f"{len(levels)} quantile levels are too few for a skew-normal fit; "
            "use the piecewise-linear representation instead"
        )
    lo_v, hi_v = float(values[0]), float(values[-1])
    spread = hi_v - lo_v
    if spread <= 0.0:
        scale = 1e-9 * max(1.0, abs(lo_v))
        return SkewNormalFit(SkewNormalParams(lo_v, scale, 0.0), 0.0)
    z_span = float(ndtri(levels[-1]) - ndtri(levels[0]))
    scale_guess = spread / z_span
    centre = float(np.interp(0.5, levels, values))
    bounds = (
        (centre - 3.0 * scale_guess, centre + 3.0 * scale_guess),
        (scale_guess / 5.0, scale_guess * 5.0),
        (-SKEW_SHAPE_BOUND, SKEW_SHAPE_BOUND),
    )
    base = config or PsoConfig(bounds=bounds)
    start = [(centre, scale_guess, 0.0)]
    result = minimize(
        lambda p: kernels.skewnorm_sse_batch(p, levels, values),
        base.with_bounds(bounds, start),
        vectorized=True,
    )
    xi, omega, shape = (float(v) for v in result.best_position)
    rms = math.sqrt(result.best_value / len(levels))
    return SkewNormalFit(SkewNormalParams(xi, omega, shape), rms)


def complete_quantiles(forecast: QuantileForecast, targets, config: PsoConfig | None = None) -> QuantileForecast:
    """Add missing ``targets`` levels from a skew-normal fit.

    Reported values are kept exactly; filled values are clipped between their
    reported neighbours so the result stays monotone.
    """
    have = {level_key(a) for a in forecast.levels}
    missing = sorted({level_key(a) for a in targets} - have)
    if not missing:
        return forecast
    params = fit_skewnormal(forecast, config).params
    pairs = dict(zip((level_key(a) for a in forecast.levels), forecast.values))
    rep_levels = np.array(sorted(pairs))
    rep_values = np.array([pairs[a] for a in rep_levels])
    for a in missing:
        v = skewnormal_quantile(params, a)
        i = int(np.searchsorted(rep_levels, a))
        if i > 0:
            v = max(v, rep_values[i - 1])
        if i < len(rep_levels):
            v = min(v, rep_values[i])
        pairs[a] = v
    levels = sorted(pairs)
    return QuantileForecast(forecast.key, forecast.target_date, tuple(levels), tuple(pairs[a] for a in levels))


class QuantileFunction:
    """Piecewise-linear quantile function through reported points.

    Beyond the outermost levels the CDF decays exponentially with the rate
    set by the outermost two quantiles, so the density is continuous at the
    join. A single reported level is treated as a point mass.
    """

    def __init__(self, levels, values):
        self.levels = np.asarray(levels, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.levels.size == 0:
            raise ValueError("empty quantile function")
        a, q = self.levels, self.values
        if a.size >= 2:
            self.beta_lo = _tail_scale(a[0], a[1] - a[0], q[1] - q[0], q)
            self.beta_hi = _tail_scale(1.0 - a[-1], a[-1] - a[-2], q[-1] - q[-2], q)
        else:
            self.beta_lo = self.beta_hi = 0.0

    @classmethod
    def from_forecast(cls, forecast: QuantileForecast):
        return cls(forecast.levels, forecast.values)

    @property
    def spread(self):
        s = float(self.values[-1] - self.values[0])
        return s if s > 0 else max(self.beta_lo, self.beta_hi, 1e-9 * max(1.0, abs(float(self.values[0]))))

    @property
    def support_hint(self):
        return float(self.values[0]), float(self.values[-1])

    def cdf(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a, q = self.levels, self.values
        idx = np.searchsorted(q, x, side="right")
        out = np.empty_like(x)
        low = idx == 0
        high = idx == q.size
        mid = ~(low | high)
        if self.beta_lo > 0:
            out[low] = a[0] * np.exp((x[low] - q[0]) / self.beta_lo)
        else:
            out[low] = 0.0
        if self.beta_hi > 0:
            out[high] = 1.0 - (1.0 - a[-1]) * np.exp(-(x[high] - q[-1]) / self.beta_hi)
        else:
            out[high] = 1.0
        if mid.any():
            j = idx[mid] - 1
            q0, q1 = q[j], q[j + 1]
            a0, a1 = a[j], a[j + 1]
            out[mid] = a0 + (a1 - a0) * (x[mid] - q0) / (q1 - q0)
        return float(out[0]) if scalar else out

    def pdf(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a, q = self.levels, self.values
        idx = np.searchsorted(q, x, side="right")
        out = np.zeros_like(x)
        low = idx == 0
        high = idx == q.size
        mid = ~(low | high)
        if self.beta_lo > 0:
            out[low] = a[0] / self.beta_lo * np.exp((x[low] - q[0]) / self.beta_lo)
        if self.beta_hi > 0:
            out[high] = (1.0 - a[-1]) / self.beta_hi * np.exp(-(x[high] - q[-1]) / self.beta_hi)
        if mid.any():
            j = idx[mid] - 1
            out[mid] = (a[j + 1] - a[j]) / (q[j + 1] - q[j])
        return float(out[0]) if scalar else out

    def quantile(self, alpha):
        scalar = np.ndim(alpha) == 0
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        a, q = self.levels, self.values
        out = np.interp(alpha, a, q)
        low = alpha < a[0]
        high = alpha > a[-1]
        if self.beta_lo > 0:
            out[low] = q[0] + self.beta_lo * np.log(alpha[low] / a[0])
        if self.beta_hi > 0:
            out[high] = q[-1] - self.beta_hi * np.log((1.0 - alpha[high]) / (1.0 - a[-1]))
        return float(out[0]) if scalar else out


def _tail_scale(tail_mass, d_alpha, d_q, q):
    if d_q > 0:
        return tail_mass * d_q / d_alpha
    # coincident outer quantiles: keep a narrow but proper tail
    width = float(q[-1] - q[0])
    return tail_mass * (width if width > 0 else 1e-9 * max(1.0, float(np.abs(q).max()))) * 1e-3


def as_component(obj):
    """Coerce a forecast or parameter set into a component distribution."""
    if isinstance(obj, QuantileForecast):
        return QuantileFunction.from_forecast(obj)
    return obj


def _component_range(comp):
    if isinstance(comp, SkewNormalParams):
        return comp.location - 3.0 * comp.scale, comp.location + 3.0 * comp.scale
    return comp.support_hint


def mixture_cdf(components, weights, x):
    total = 0.0
    for c, w in zip(components, weights):
        if w > 0.0:
            total = total + w * np.asarray(c.cdf(x), dtype=float)
    return total


def _mixture_cdf_fn(comps, ws):
    """Mixture CDF as a callable, batched through the kernel when every component is piecewise."""
    if all(isinstance(c, QuantileFunction) for c in comps) and len({c.levels.size for c in comps}) == 1:
        A = np.vstack([c.levels for c in comps])
        Q = np.vstack([c.values for c in comps])
        blo = np.array([c.beta_lo for c in comps])
        bhi = np.array([c.beta_hi for c in comps])

        def f(x):
            x = np.asarray(x, dtype=float)
            return kernels.pl_mixture_cdf(x, A, Q, blo, bhi, ws).reshape(x.shape)
        return f
    return lambda x: mixture_cdf(comps, ws, x)


def mixture_quantiles(components, weights, targets, ftol: float = BISECTION_FTOL) -> np.ndarray:
    """Quantiles of ``sum_k w_k F_k`` at ``targets`` by bisection.

    ``components`` and ``weights`` are aligned sequences, or ``components``
    is a mapping keyed like the ``weights`` mapping.
    """
    if hasattr(components, "items"):
        names = sorted(components)
        weights = [float(weights[n]) for n in names]
        components = [components[n] for n in names]
    components = [as_component(c) for c in components]
    weights = np.asarray(weights, dtype=float)
    if not components:
        raise ValueError("mixture needs at least one component")
    if weights.size != len(components):
        raise ValueError("weights and components differ in length")
    active = [(c, w) for c, w in zip(components, weights) if w > 0.0]
    comps = [c for c, _ in active]
    ws = np.array([w for _, w in active])
    ws = ws / ws.sum()
    targets = np.asarray(targets, dtype=float)
    F = _mixture_cdf_fn(comps, ws)

    lows, highs = zip(*(_component_range(c) for c in comps))
    scale = max(c.spread for c in comps)
    lo = np.full(targets.shape, min(lows) - 10.0 * scale)
    hi = np.full(targets.shape, max(highs) + 10.0 * scale)
    step = 10.0 * scale
    for _ in range(200):
        f = F(lo)
        need = f > targets
        if not need.any():
            break
        step *= 2.0
        lo[need] -= step
    step = 10.0 * scale
    for _ in range(200):
        f = F(hi)
        need = f < targets
        if not need.any():
            break
        step *= 2.0
        hi[need] += step

    mid = 0.5 * (lo + hi)
    done = np.zeros(targets.shape, dtype=bool)
    result = mid.copy()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = F(mid)
        hit = ~done & (np.abs(f - targets) < ftol)
        result[hit] = mid[hit]
        done |= hit
        narrow = ~done & (hi - lo <= 1e-12 * (1.0 + np.abs(mid)))
        result[narrow] = mid[narrow]
        done |= narrow
        if done.all():
            break
        below = f < targets
        lo = np.where(~done & below, mid, lo)
        hi = np.where(~done & ~below, mid, hi)
    result[~done] = mid[~done]
    if result.ndim == 1 and np.all(np.diff(targets) >= 0):
        result = np.maximum.accumulate(result)
    return result
