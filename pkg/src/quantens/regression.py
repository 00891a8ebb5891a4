"""Regression-based combination: EMOS+, QRA and shifted QRA."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy.special import ndtri

from quantens import kernels
from quantens.core import ForecastDelivery, QuantileForecast, SeriesKey, TrainingWindow
from quantens.distfit import complete_quantiles
from quantens.pso import PsoConfig, minimize

logger = logging.getLogger(__name__)

MIN_TRAINING_DAYS = 5
SLOPE_BOUNDS = (0.0, 5.0)
SPREAD_COEF_BOUNDS = (0.0, 10.0)
VARIANCE_FLOOR_FACTOR = 1e-6

METHOD_NAMES = ("emos", "qra", "sqra")


class InsufficientDataError(ValueError):
    """Too little complete training data to fit a regression combiner."""


@dataclass(frozen=True)
class EmosCoefficients:
    slopes: Mapping
    c: float
    d: float
    intercept: float = 0.0
    variance_floor: float = 0.0
    objective: float = math.nan

    def __post_init__(self):
        object.__setattr__(self, "slopes", MappingProxyType(dict(sorted(self.slopes.items()))))
        if any(b < 0 for b in self.slopes.values()) or self.c < 0 or self.d < 0:
            raise ValueError("EMOS+ coefficients must be non-negative")

    def variance(self, spread: float) -> float:
        return max(self.c + self.d * spread * spread, self.variance_floor)

    def as_dict(self):
        return {"intercept": self.intercept, "slopes": dict(self.slopes), "c": self.c, "d": self.d,
                "variance_floor": self.variance_floor, "objective": self.objective}


@dataclass(frozen=True)
class EnsembleStats:
    """Member medians for one target date and their spread (population sd)."""

    key: SeriesKey
    target_date: date
    medians: Mapping

    @property
    def spread(self) -> float:
        return float(np.std(list(self.medians.values())))

    @classmethod
    def from_forecasts(cls, forecasts: Mapping[str, QuantileForecast]):
        fcs = list(forecasts.values())
        return cls(fcs[0].key, fcs[0].target_date, {m: _median(fc) for m, fc in forecasts.items()})


@dataclass(frozen=True)
class QraCoefficients:
    slopes: Mapping
    objective: float = math.nan

    def __post_init__(self):
        object.__setattr__(self, "slopes", MappingProxyType(dict(sorted(self.slopes.items()))))
        if any(b < 0 for b in self.slopes.values()):
            raise ValueError("QRA slopes must be non-negative")

    def as_dict(self):
        return {"slopes": dict(self.slopes), "objective": self.objective}


@dataclass(frozen=True)
class SqraShift:
    offsets: Mapping
    fallback: frozenset = field(default_factory=frozenset)
    missing: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "offsets", MappingProxyType(dict(sorted(self.offsets.items()))))
        if not all(math.isfinite(v) for v in self.offsets.values()):
            raise ValueError("shift offsets must be finite")

    def merge(self, other: "SqraShift") -> "SqraShift":
        return SqraShift({**self.offsets, **other.offsets}, self.fallback | other.fallback,
                         self.missing | other.missing)

    def as_dict(self):
        return {"offsets": dict(self.offsets), "fallback": sorted(self.fallback), "missing": sorted(self.missing)}


def _median(fc: QuantileForecast) -> float:
    if fc.has_level(0.5):
        return fc.median
    return complete_quantiles(fc, [0.5]).median


def complete_training_set(windows: Mapping[str, TrainingWindow]):
    """Models whose windows cover every scored day, and those days.

    Models missing any day that another model covers are dropped, since the
    regression cannot use absent covariates.
    """
    days = sorted({d for w in windows.values() for d in w.dates})
    included, excluded = [], []
    for model in sorted(windows):
        if windows[model].dates and set(windows[model].dates) == set(days):
            included.append(model)
        else:
            excluded.append(model)
    if excluded:
        logger.info("excluding models with incomplete training windows: %s", ", ".join(excluded))
    if not included:
        raise InsufficientDataError("no model has a complete training window")
    if len(days) < MIN_TRAINING_DAYS:
        raise InsufficientDataError(f"{len(days)} complete training days, need at least {MIN_TRAINING_DAYS}")
    return included, days


def _aligned(windows, models, days):
    by_model = {m: {fc.target_date: (fc, w) for fc, w in windows[m].pairs} for m in models}
    obs = np.array([by_model[models[0]][d][1] for d in days])
    return by_model, obs


def fit_emos(windows: Mapping[str, TrainingWindow], config: PsoConfig | None = None,
             fit_intercept: bool = False) -> EmosCoefficients:
    """EMOS+ fit by minimum mean Gaussian CRPS on the training days.

    Covariates are member medians and the variance is ``c + d * S**2`` with
    ``S`` the spread of the medians. All coefficients are non-negative and the
    intercept is held at zero unless ``fit_intercept``.
    """
    models, days = complete_training_set(windows)
    by_model, obs = _aligned(windows, models, days)
    medians = np.array([[_median(by_model[m][d][0]) for m in models] for d in days])
    spread = medians.std(axis=1)
    scale = max(float(np.abs(obs).mean()), 1.0)
    floor = VARIANCE_FLOOR_FACTOR * scale * scale
    sd = float(obs.std())
    c_hi = max((3.0 * sd) ** 2, floor)
    K = len(models)
    if fit_intercept:
        a_span = abs(float(obs.mean())) + 3.0 * sd
        a_bounds = (-a_span, a_span)
    else:
        a_bounds = (0.0, 0.0)
    bounds = [a_bounds] + [SLOPE_BOUNDS] * K + [(0.0, c_hi), SPREAD_COEF_BOUNDS]
    resid_var = float(np.var(obs - medians.mean(axis=1)))
    starts = [[0.0] + [1.0 / K] * K + [min(resid_var, c_hi), 0.0]]
    for k in range(K):
        starts.append([0.0] + [1.0 if j == k else 0.0 for j in range(K)] + [min(resid_var, c_hi), 0.0])
    base = config or PsoConfig(bounds=bounds)
    result = minimize(
        lambda P: kernels.emos_objective_batch(P, medians, spread, obs, floor),
        base.with_bounds(bounds, starts),
        vectorized=True,
    )
    p = result.best_position
    return EmosCoefficients(
        slopes=dict(zip(models, (float(b) for b in p[1:1 + K]))),
        c=float(p[1 + K]),
        d=float(p[2 + K]),
        intercept=float(p[0]),
        variance_floor=floor,
        objective=float(result.best_value),
    )


def predict_emos(coeffs: EmosCoefficients, stats: EnsembleStats, targets) -> QuantileForecast:
    mean = coeffs.intercept + math.fsum(b * stats.medians[m] for m, b in coeffs.slopes.items())
    sd = math.sqrt(coeffs.variance(stats.spread))
    targets = tuple(sorted(float(a) for a in targets))
    values = tuple(mean + sd * float(ndtri(a)) for a in targets)
    return QuantileForecast(stats.key, stats.target_date, targets, values)


def _quantile_matrix(fc: QuantileForecast, levels):
    if not all(fc.has_level(a) for a in levels):
        fc = complete_quantiles(fc, levels)
    return [fc.value_at(a) for a in levels]


def qra_design(windows: Mapping[str, TrainingWindow], levels):
    """Training tensor ``days x levels x models`` and observations for QRA."""
    models, days = complete_training_set(windows)
    by_model, obs = _aligned(windows, models, days)
    Y = np.array([[_quantile_matrix(by_model[m][d][0], levels) for m in models] for d in days])
    return models, np.ascontiguousarray(Y.transpose(0, 2, 1)), obs


def qra_objective(slopes, quantiles, obs, levels) -> float:
    return float(kernels.qra_objective_batch(np.atleast_2d(slopes), quantiles, obs, levels)[0])


def fit_qra(windows: Mapping[str, TrainingWindow], levels, config: PsoConfig | None = None) -> QraCoefficients:
    """Shared non-negative slopes minimising the mean quantile score.

    Equal convex weights and every unit vector seed the swarm, so the fit is
    never worse than those baselines.
    """
    levels = tuple(sorted(float(a) for a in levels))
    models, Y, obs = qra_design(windows, levels)
    K = len(models)
    lv = np.asarray(levels)
    bounds = [SLOPE_BOUNDS] * K
    starts = [[1.0 / K] * K] + [list(row) for row in np.eye(K)]
    base = config or PsoConfig(bounds=bounds)
    result = minimize(
        lambda P: kernels.qra_objective_batch(P, Y, obs, lv),
        base.with_bounds(bounds, starts),
        vectorized=True,
    )
    baseline = min(qra_objective(s, Y, obs, lv) for s in starts)
    if result.best_value > baseline:  # pragma: no cover - guarded by the seeded swarm
        raise RuntimeError("QRA fit is worse than a baseline")
    return QraCoefficients(dict(zip(models, (float(b) for b in result.best_position))), float(result.best_value))


def predict_qra(coeffs: QraCoefficients, forecasts: Mapping[str, QuantileForecast], levels) -> QuantileForecast:
    """Slope-weighted sum of member quantiles per level, sorted if the sums cross."""
    levels = tuple(sorted(float(a) for a in levels))
    total = np.zeros(len(levels))
    ref = None
    for model, b in coeffs.slopes.items():
        fc = forecasts.get(model)
        if fc is None:
            if b == 0.0:
                continue
            raise KeyError(f"no forecast for model {model} with slope {b}")
        ref = fc
        total = total + b * np.array(_quantile_matrix(fc, levels))
    if ref is None:
        ref = next(iter(forecasts.values()))
    values = total.tolist()
    if any(b < a for a, b in zip(values, values[1:])):
        logger.warning("QRA quantiles crossed for %s %s; sorted", ref.key, ref.target_date)
        values.sort()
    return QuantileForecast(ref.key, ref.target_date, levels, tuple(values))


def compute_sqra_shift(current: ForecastDelivery, window: TrainingWindow, model: str | None = None,
                       t0: date | None = None) -> SqraShift:
    """Offset between a model's current median at ``t0`` and its training prediction for ``t0``.

    Falls back to the latest training prediction when none targets ``t0``,
    and to zero when there is no training prediction at all.
    """
    model = model or current.model
    t0 = t0 or window.as_of
    fc = current.get(window.key, t0)
    if fc is None:
        raise ValueError(f"current delivery of {model} has no forecast for {window.key} {t0}")
    now = _median(fc)
    anchor = window.anchor if window.anchor is not None and window.anchor.target_date == t0 else None
    if anchor is None:
        anchor = next((f for f, _ in window.pairs if f.target_date == t0), None)
    if anchor is not None:
        return SqraShift({model: now - _median(anchor)})
    if window.pairs:
        latest = window.pairs[-1][0]
        logger.info("SQRA shift for %s uses latest training date %s instead of %s", model, latest.target_date, t0)
        return SqraShift({model: now - _median(latest)}, fallback=frozenset({model}))
    logger.warning("no training predictions for %s overlap %s; SQRA shift set to 0", model, t0)
    return SqraShift({model: 0.0}, missing=frozenset({model}))


def predict_sqra(coeffs: QraCoefficients, forecasts: Mapping[str, QuantileForecast], shifts: SqraShift,
                 levels) -> QuantileForecast:
    """QRA on member forecasts translated by minus their shift offsets."""
    moved = {}
    for model, fc in forecasts.items():
        delta = shifts.offsets.get(model, 0.0)
        moved[model] = fc if delta == 0.0 else fc.shifted(-delta)
    return predict_qra(coeffs, moved, levels)
