"""Mixture-based forecast combination (stacking)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from datetime import date
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from quantens.core import (
    DEFAULT_HORIZON,
    DEFAULT_TRAIN_WINDOW,
    QuantileForecast,
    SeriesKey,
    TrainingWindow,
    level_key,
)
from quantens.distfit import (
    QuantileFunction,
    SkewNormalParams,
    as_component,
    complete_quantiles,
    fit_skewnormal,
    mixture_quantiles,
)
from quantens.pso import PsoConfig, minimize
from quantens.scoring import forecast_quantile_score_sum

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12
NORMALIZED_SCORE_FLOOR = 1e-9

METHOD_NAMES = ("stacked-equal", "stacked-ti", "stacked-tv", "stacked-opt")


class StackingError(ValueError):
    pass


@dataclass(frozen=True)
class WeightVector:
    weights: Mapping

    def __post_init__(self):
        w = {str(k): float(v) for k, v in self.weights.items()}
        if not w:
            raise StackingError("weight vector is empty")
        if any(not math.isfinite(v) or v < 0.0 for v in w.values()):
            raise StackingError(f"weights must be finite and non-negative: {w}")
        if abs(sum(w.values()) - 1.0) > SIMPLEX_TOL:
            raise StackingError(f"weights sum to {sum(w.values())!r}, not 1")
        object.__setattr__(self, "weights", MappingProxyType(dict(sorted(w.items()))))

    @classmethod
    def normalized(cls, raw: Mapping) -> "WeightVector":
        total = math.fsum(raw.values())
        if not total > 0.0:
            raise StackingError("cannot normalise weights with a non-positive total")
        w = {k: v / total for k, v in raw.items()}
        # fold the rounding residue into the largest weight
        residue = 1.0 - math.fsum(w.values())
        top = max(w, key=w.get)
        w[top] += residue
        return cls(w)

    def __getitem__(self, model):
        return self.weights[model]

    def __iter__(self):
        return iter(self.weights)

    def __len__(self):
        return len(self.weights)

    def items(self):
        return self.weights.items()

    @property
    def models(self):
        return list(self.weights)

    def as_dict(self):
        return dict(self.weights)


@dataclass(frozen=True)
class StackingConfig:
    decay: float = 0.9
    window: int = DEFAULT_TRAIN_WINDOW
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")
        if self.window < 1 or self.horizon < 1:
            raise ValueError("window and horizon must be positive")


def equal_weights(models: Sequence[str]) -> WeightVector:
    models = list(models)
    if not models:
        raise StackingError("equal_weights needs at least one model")
    if len(set(models)) != len(models):
        raise StackingError("duplicate model ids")
    return WeightVector.normalized({m: 1.0 for m in models})


def decayed_reciprocal_weights(scores_by_day: Mapping[int, Mapping[str, float]], decay: float, length: int,
                               models: Sequence[str] = ()) -> WeightVector:
    """Weights from per-day raw scores keyed by 1-based day index.

    Each day's scores are normalised across the models that reported that day;
    a model accumulates ``decay**(length - i) / normalised score`` over the
    days it reported, and the totals are normalised across models.
    """
    raw = {m: 0.0 for m in models}
    for i, day_scores in scores_by_day.items():
        if not day_scores:
            continue
        total = math.fsum(day_scores.values())
        n = len(day_scores)
        factor = decay ** (length - i)
        for model, s in day_scores.items():
            norm = s / total if total > 0.0 else 1.0 / n
            raw[model] = raw.get(model, 0.0) + factor / max(norm, NORMALIZED_SCORE_FLOOR)
    if not any(v > 0.0 for v in raw.values()):
        raise StackingError("no model has any scored training day")
    return WeightVector.normalized(raw)


def _score_forecast(fc: QuantileForecast, w: float, levels) -> float:
    if levels is None:
        return forecast_quantile_score_sum(fc, w)
    if not all(fc.has_level(a) for a in levels):
        fc = complete_quantiles(fc, levels)
    keys = {level_key(a) for a in levels}
    return math.fsum(
        2.0 * ((1.0 if w < q else 0.0) - a) * (q - w)
        for a, q in zip(fc.levels, fc.values)
        if level_key(a) in keys
    )


def time_invariant_weights(windows: Mapping[str, TrainingWindow], config: StackingConfig = StackingConfig(),
                           levels=None) -> WeightVector:
    """Decayed reciprocal-score weights from each model's training window.

    ``levels``, when given, restricts scoring to that grid, completing any
    missing levels first so models are scored on equal terms.
    """
    if not windows or all(len(w) == 0 for w in windows.values()):
        raise StackingError("all training windows are empty")
    by_day = {}
    for model, window in windows.items():
        for fc, w in window.pairs:
            i = window.day_index(fc.target_date)
            by_day.setdefault(i, {})[model] = _score_forecast(fc, w, levels)
    return decayed_reciprocal_weights(by_day, config.decay, config.window, models=list(windows))


def time_varying_weights(base: WeightVector, config: StackingConfig, lead: int) -> WeightVector:
    """Geometric interpolation from ``base`` at lead 1 to equal weights at the horizon."""
    H = config.horizon
    if not 1 <= lead <= H:
        raise ValueError(f"lead {lead} outside [1, {H}]")
    if lead == 1:
        return base
    k = len(base)
    gamma = (H - lead) / (H - 1)
    raw = {m: (w ** gamma) * (1.0 / k) ** (1.0 - gamma) for m, w in base.items()}
    return WeightVector.normalized(raw)


def normalized_score_weights(scores: Mapping[str, float], transform: str = "reciprocal") -> WeightVector:
    """Weights proportional to a decreasing transform of each model's score.

    ``exp_negative`` gives ``exp(-S)`` (AIC-style with log scores);
    ``reciprocal`` gives ``1/S``. Under ``reciprocal`` any zero score takes
    all of the weight, shared among the zero-score models.
    """
    if not scores:
        raise StackingError("no scores given")
    vals = {m: float(s) for m, s in scores.items()}
    if any(not math.isfinite(s) for s in vals.values()):
        raise StackingError("scores must be finite")
    if transform == "exp_negative":
        lo = min(vals.values())
        raw = {m: math.exp(-(s - lo)) for m, s in vals.items()}
    elif transform == "reciprocal":
        if any(s < 0.0 for s in vals.values()):
            raise StackingError("reciprocal weights need non-negative scores")
        zeros = [m for m, s in vals.items() if s == 0.0]
        if zeros:
            raw = {m: (1.0 if m in zeros else 0.0) for m in vals}
        else:
            raw = {m: 1.0 / s for m, s in vals.items()}
    else:
        raise ValueError(f"unknown transform {transform!r}")
    return WeightVector.normalized(raw)


def _tail_extent(comp):
    if isinstance(comp, SkewNormalParams):
        return comp.location - 12.0 * comp.scale, comp.location + 12.0 * comp.scale
    lo, hi = comp.support_hint
    return lo - 40.0 * comp.beta_lo, hi + 40.0 * comp.beta_hi


def _breakpoints(comp):
    if isinstance(comp, QuantileFunction):
        return comp.values
    return np.array([comp.location])


_GL_NODES = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GL_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 9.0


def crps_gram(components, w: float) -> np.ndarray:
    """Matrix ``M[j, k] = integral (F_j - H_w)(F_k - H_w) dx``.

    For weights on the simplex the mixture CRPS is ``weights @ M @ weights``.
    Breakpoints are grid nodes so each panel is smooth; panels use 3-point
    Gauss-Legendre.
    """
    comps = [as_component(c) for c in components]
    lows, highs = zip(*(_tail_extent(c) for c in comps))
    lo, hi = min(min(lows), w), max(max(highs), w)
    core = np.concatenate([_breakpoints(c) for c in comps] + [[w]])
    core_lo, core_hi = float(core.min()), float(core.max())
    pieces = [core, np.linspace(lo, hi, 801)]
    if core_hi > core_lo:
        pieces.append(np.linspace(core_lo, core_hi, 401))
    pieces.append(np.linspace(lo, core_lo, 201))
    pieces.append(np.linspace(core_hi, hi, 201))
    grid = np.unique(np.concatenate(pieces))
    a, b = grid[:-1], grid[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    qw = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    step = (x >= w).astype(float)
    D = np.vstack([np.asarray(c.cdf(x), dtype=float) - step for c in comps])
    return (D * qw) @ D.T


def _simplex_from_free(u):
    """Map free coordinates in [0, 1]^(K-1) to the simplex; also return the overshoot."""
    u = np.atleast_2d(u)
    s = u.sum(axis=1)
    over = np.maximum(s - 1.0, 0.0)
    scale = np.where(s > 1.0, 1.0 / np.where(s > 0, s, 1.0), 1.0)
    head = u * scale[:, None]
    last = 1.0 - head.sum(axis=1)
    return np.clip(np.hstack([head, last[:, None]]), 0.0, None), over


def optimize_mixture_weights(components: Mapping[str, Sequence], observations: Sequence[float],
                             score: str = "crps", config: PsoConfig | None = None) -> WeightVector:
    """Weights minimising the mean training score of the mixture.

    ``components[model][i]`` is the model's predictive distribution for the
    ``i``-th observation. The simplex is searched through ``K - 1`` free
    coordinates; points outside it are projected back and penalised.
    """
    models = sorted(components)
    obs = np.asarray(observations, dtype=float)
    if not models:
        raise StackingError("no models to weight")
    for m in models:
        if len(components[m]) != obs.size:
            raise StackingError(f"model {m} has {len(components[m])} components for {obs.size} observations")
    if obs.size == 0:
        raise StackingError("no training observations")
    if len(models) == 1:
        return WeightVector({models[0]: 1.0})
    K = len(models)
    comps = [[as_component(components[m][i]) for m in models] for i in range(obs.size)]

    if score == "crps":
        gram = np.stack([crps_gram(c, w) for c, w in zip(comps, obs)])

        def mixture_score(W):
            return np.einsum("nk,ikl,nl->n", W, gram, W) / obs.size
    elif score == "log":
        dens = np.array([[float(c.pdf(w)) for c in row] for row, w in zip(comps, obs)])

        def mixture_score(W):
            p = W @ dens.T
            with np.errstate(divide="ignore"):
                return -np.log(p).mean(axis=1)
    else:
        raise ValueError(f"unknown score {score!r}")

    def objective(U):
        W, over = _simplex_from_free(U)
        f = mixture_score(W)
        return f + over * (1.0 + np.abs(f))

    bounds = [(0.0, 1.0)] * (K - 1)
    starts = [[1.0 / K] * (K - 1)] + [list(row[:-1]) for row in np.eye(K)]
    base = config or PsoConfig(bounds=bounds)
    result = minimize(objective, base.with_bounds(bounds, starts), vectorized=True)
    W, _ = _simplex_from_free(result.best_position)
    return WeightVector.normalized(dict(zip(models, W[0])))


def mixture_training_score(components: Mapping[str, Sequence], observations, weights: WeightVector,
                           score: str = "crps") -> float:
    """Mean training score of the weighted mixture (the quantity optimised above)."""
    models = sorted(components)
    obs = np.asarray(observations, dtype=float)
    w = np.array([weights.weights.get(m, 0.0) for m in models])
    total = 0.0
    for i, y in enumerate(obs):
        row = [as_component(components[m][i]) for m in models]
        if score == "crps":
            total += float(w @ crps_gram(row, y) @ w)
        else:
            p = sum(wk * float(c.pdf(y)) for wk, c in zip(w, row))
            total += -math.log(p) if p > 0 else math.inf
    return total / obs.size


def stacked_forecast(current: Mapping[str, object], weights, targets, key: SeriesKey,
                     component: str = "piecewise") -> list[QuantileForecast]:
    """Mixture quantiles per target date of the current forecasts.

    ``current`` maps model id to its current ``ForecastDelivery``. ``weights``
    is a ``WeightVector``, a mapping from lead (1-based) to ``WeightVector``,
    or a callable ``lead -> WeightVector``.
    """
    targets = tuple(sorted(float(a) for a in targets))

    def weights_for(lead):
        if isinstance(weights, WeightVector):
            return weights
        if callable(weights):
            return weights(lead)
        return weights[lead]

    dates = set()
    for model, delivery in current.items():
        dates.update(delivery.forecast_dates(key))
    out = []
    for target in sorted(dates):
        if not any(d.get(key, target) is not None for d in current.values()):
            continue
        lead = (target - min(d.delivery_date for d in current.values())).days + 1
        wv = weights_for(lead)
        comps, ws = [], []
        for model, w in wv.items():
            if w <= 0.0:
                continue
            delivery = current.get(model)
            fc = delivery.get(key, target) if delivery is not None else None
            if fc is None:
                raise StackingError(f"model {model} has positive weight but no forecast for {key} {target}")
            if component == "skewnormal" and len(fc.levels) >= 3:
                comps.append(fit_skewnormal(fc).params)
            else:
                comps.append(QuantileFunction.from_forecast(fc))
            ws.append(w)
        values = mixture_quantiles(comps, ws, targets)
        out.append(QuantileForecast(key, target, targets, tuple(float(v) for v in values)))
    return out
