"""Per-series combination dispatch and the rolling-origin backtest."""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from datetime import date
from typing import Mapping, Sequence

from quantens.core import DEFAULT_HORIZON, DEFAULT_LEVELS, DEFAULT_TRAIN_WINDOW, DataError, ForecastDelivery, \
    ObservationSeries, QuantileForecast, SeriesKey, build_training_window
from quantens.evaluation import REPORT_FIELDS, EvaluationError, evaluate, select_best
from quantens.pso import PsoConfig
from quantens.regression import EnsembleStats, InsufficientDataError, SqraShift, compute_sqra_shift, fit_emos, \
    fit_qra, predict_emos, predict_qra, predict_sqra
from quantens.stacking import StackingConfig, StackingError, WeightVector, equal_weights, optimize_mixture_weights, \
    stacked_forecast, time_invariant_weights, time_varying_weights

logger = logging.getLogger(__name__)

METHODS = ("stacked-equal", "stacked-ti", "stacked-tv", "stacked-opt", "emos", "qra", "sqra")
FALLBACK_METHOD = "stacked-equal"
METRIC_FIELDS = REPORT_FIELDS[2:]


class MethodUnavailable(DataError):
    """A method cannot be fitted for one series and delivery date."""


@dataclass(frozen=True)
class RunConfig:
    train_window: int = DEFAULT_TRAIN_WINDOW
    horizon: int = DEFAULT_HORIZON
    decay: float = 0.9
    levels: tuple = DEFAULT_LEVELS
    seed: int = 0
    include_incomplete: bool = False
    swarm_size: int = 50
    iterations: int = 200

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(sorted(float(a) for a in self.levels)))
        if self.train_window < 1 or self.horizon < 1:
            raise ValueError("train window and horizon must be positive")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")

    @property
    def stacking(self) -> StackingConfig:
        return StackingConfig(decay=self.decay, window=self.train_window, horizon=self.horizon)

    def pso(self, key: SeriesKey, as_of: date, kind: str) -> PsoConfig:
        return PsoConfig(bounds=((0.0, 1.0),), swarm_size=self.swarm_size, iterations=self.iterations,
                         seed=fit_seed(self.seed, key, as_of, kind))

    def as_dict(self):
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d


def fit_seed(seed: int, key: SeriesKey, as_of: date, kind: str) -> int:
    """Seed for one fit, stable across runs and independent of other fits."""
    return (seed + zlib.crc32(f"{key}|{as_of.isoformat()}|{kind}".encode("utf-8"))) % (2 ** 32)


@dataclass
class SeriesCombination:
    key: SeriesKey
    as_of: date
    method: str
    forecasts: list
    parameters: dict = field(default_factory=dict)


def _unavailable(method, key, as_of, reason):
    return MethodUnavailable(
        f"{method} unavailable for {key} at {as_of}: {reason}; "
        f"the {FALLBACK_METHOD} method needs no training data and can be used instead"
    )


def current_deliveries(deliveries: Sequence[ForecastDelivery], as_of: date, key: SeriesKey | None = None) -> dict:
    """Deliveries made exactly on ``as_of``, optionally only those covering ``key``."""
    out = {}
    for dl in deliveries:
        if dl.delivery_date == as_of and (key is None or dl.forecast_dates(key)):
            if dl.model in out:
                raise DataError(f"model {dl.model} has two deliveries on {as_of}")
            out[dl.model] = dl
    return out


def select_models(windows: Mapping, config: RunConfig) -> list:
    """Models used for fitting: complete windows only, unless incomplete ones are allowed."""
    if config.include_incomplete:
        return sorted(windows)
    return sorted(m for m, w in windows.items() if w.is_complete)


def _stats(current, models, key, target):
    fcs = {m: current[m].get(key, target) for m in models}
    missing = [m for m, fc in fcs.items() if fc is None]
    if missing:
        raise DataError(f"no forecast for {key} {target} from {', '.join(missing)}")
    return fcs


def combine_series(deliveries: Sequence[ForecastDelivery], obs: ObservationSeries | None, key: SeriesKey,
                   as_of: date, method: str, config: RunConfig) -> SeriesCombination:
    """Combine the ``as_of`` deliveries for one series with ``method``.

    Training uses only deliveries made before ``as_of`` and observations dated
    before ``as_of``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    current = current_deliveries(deliveries, as_of, key)
    if not current:
        raise DataError(f"no deliveries for {key} on {as_of}")
    if obs is not None:
        obs = ObservationSeries(key, {d: v for d, v in obs.points.items() if d < as_of})
    windows = {m: build_training_window(deliveries, obs, m, key, as_of, config.train_window) for m in current}
    models = select_models(windows, config)
    if not models:
        raise _unavailable(method, key, as_of, "no current model has a complete training window")
    current = {m: current[m] for m in models}
    windows = {m: windows[m] for m in models}
    levels = config.levels
    params = {"models": models, "window_days": {m: len(windows[m]) for m in models}}

    if method.startswith("stacked"):
        try:
            if method == "stacked-equal":
                weights = equal_weights(models)
            elif method in ("stacked-ti", "stacked-tv"):
                weights = time_invariant_weights(windows, config.stacking, levels=levels)
            else:
                weights = _optimal_weights(windows, models, config.pso(key, as_of, "stacked-opt"))
        except StackingError as exc:
            raise _unavailable(method, key, as_of, str(exc)) from None
        params["weights"] = weights.as_dict()
        if method == "stacked-tv":
            cfg = config.stacking
            per_lead = {h: time_varying_weights(weights, cfg, h) for h in range(1, cfg.horizon + 1)}
            params["weights_by_lead"] = {str(h): w.as_dict() for h, w in per_lead.items()}
            weights = lambda lead: per_lead[min(max(lead, 1), cfg.horizon)]  # noqa: E731
        if method == "stacked-opt":
            params["seed"] = config.pso(key, as_of, method).seed
        fcs = stacked_forecast(current, weights, levels, key)
        return SeriesCombination(key, as_of, method, fcs, params)

    targets = sorted({t for dl in current.values() for t in dl.forecast_dates(key)})
    try:
        if method == "emos":
            pso = config.pso(key, as_of, "emos")
            coeffs = fit_emos(windows, pso)
            params.update(seed=pso.seed, coefficients=coeffs.as_dict())
            fcs = [predict_emos(coeffs, EnsembleStats.from_forecasts(_stats(current, coeffs.slopes, key, t)), levels)
                   for t in targets]
            return SeriesCombination(key, as_of, method, fcs, params)
        pso = config.pso(key, as_of, "qra")
        coeffs = fit_qra(windows, levels, pso)
    except InsufficientDataError as exc:
        raise _unavailable(method, key, as_of, str(exc)) from None
    params.update(seed=pso.seed, coefficients=coeffs.as_dict())
    if method == "qra":
        fcs = [predict_qra(coeffs, _stats(current, coeffs.slopes, key, t), levels) for t in targets]
        return SeriesCombination(key, as_of, method, fcs, params)
    shifts = SqraShift({})
    for m in coeffs.slopes:
        shifts = shifts.merge(compute_sqra_shift(current[m], windows[m], m, as_of))
    params["shifts"] = shifts.as_dict()
    fcs = [predict_sqra(coeffs, _stats(current, coeffs.slopes, key, t), shifts, levels) for t in targets]
    return SeriesCombination(key, as_of, method, fcs, params)


def _optimal_weights(windows, models, pso: PsoConfig) -> WeightVector:
    """CRPS-optimal mixture weights on the days every trained model covers."""
    trained = [m for m in models if len(windows[m])]
    if not trained:
        raise StackingError("all training windows are empty")
    days = set.intersection(*(set(windows[m].dates) for m in trained))
    if not days:
        raise StackingError("trained models share no training day")
    days = sorted(days)
    by_model = {m: {fc.target_date: (fc, w) for fc, w in windows[m].pairs} for m in trained}
    comps = {m: [by_model[m][d][0] for d in days] for m in trained}
    obs = [by_model[trained[0]][d][1] for d in days]
    w = optimize_mixture_weights(comps, obs, "crps", pso)
    return WeightVector.normalized({m: w.weights.get(m, 0.0) for m in models})


@dataclass
class BacktestResult:
    """Per delivery-date rows, per-series summaries and per-value-type aggregates."""

    rows: list = field(default_factory=list)
    series_rows: list = field(default_factory=list)
    aggregate_rows: list = field(default_factory=list)
    leaderboards: list = field(default_factory=list)
    combined: list = field(default_factory=list)
    skipped: list = field(default_factory=list)


def _mean_row(rows):
    return {f: math.fsum(r[f] for r in rows) / len(rows) for f in METRIC_FIELDS}


def _rank_rows(rows):
    return sorted(rows, key=lambda r: (r["distance"], r["sharpness"], r["method"]))


def evaluable_dates(deliveries, observations: Mapping[SeriesKey, ObservationSeries], config: RunConfig):
    """Delivery dates with at least one usable training window for some series."""
    out = []
    for as_of in sorted({dl.delivery_date for dl in deliveries}):
        for key, obs in sorted(observations.items()):
            current = current_deliveries(deliveries, as_of, key)
            windows = [build_training_window(deliveries, obs, m, key, as_of, config.train_window) for m in current]
            if any(w.is_complete if not config.include_incomplete else len(w) > 0 for w in windows):
                out.append(as_of)
                break
    return out


def run_backtest(deliveries: Sequence[ForecastDelivery], observations: Sequence[ObservationSeries],
                 methods: Sequence[str], config: RunConfig, every: int = 1) -> BacktestResult:
    """Fit, forecast and evaluate each method at every evaluable delivery date.

    Forecasts are scored only on target dates on or after their delivery date.
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    obs_by_key = {s.key: s for s in observations}
    dates = evaluable_dates(deliveries, obs_by_key, config)[::max(1, every)]
    if not dates:
        raise DataError("no evaluable delivery dates: no model has a usable training window")
    result = BacktestResult()
    for as_of in dates:
        for key in sorted(obs_by_key):
            if not current_deliveries(deliveries, as_of, key):
                continue
            obs = obs_by_key[key]
            metrics = {}
            for method in methods:
                try:
                    comb = combine_series(deliveries, obs, key, as_of, method, config)
                except MethodUnavailable as exc:
                    logger.warning("%s", exc)
                    result.skipped.append({"delivery_date": as_of.isoformat(), "series_key": str(key),
                                           "method": method, "reason": str(exc)})
                    continue
                scored = [fc for fc in comb.forecasts if fc.target_date >= as_of and obs.get(fc.target_date) is not None]
                if not scored:
                    continue
                metrics[method] = evaluate({method: scored}, obs)[method]
                result.combined.append((as_of, method, comb.forecasts))
            if not metrics:
                continue
            rows = []
            for method, m in metrics.items():
                d = m.as_dict()
                rows.append({"delivery_date": as_of.isoformat(), "series_key": str(key), "method": method,
                             **{f: d[f] for f in METRIC_FIELDS}})
            rows = _rank_rows(rows)
            result.rows.extend(rows)
            result.leaderboards.append({"delivery_date": as_of.isoformat(), "series_key": str(key),
                                        "best": select_best(metrics), "ranking": [r["method"] for r in rows]})
    if not result.rows:
        raise EvaluationError("no delivery date produced an evaluable forecast")
    _summarise(result)
    return result


def _summarise(result: BacktestResult):
    by_series = {}
    for r in result.rows:
        by_series.setdefault((r["series_key"], r["method"]), []).append(r)
    series_rows = []
    for (skey, method), rows in sorted(by_series.items()):
        series_rows.append({"series_key": skey, "method": method, "deliveries": len(rows), **_mean_row(rows)})
    result.series_rows = series_rows
    for skey in sorted({r["series_key"] for r in series_rows}):
        ranked = _rank_rows([r for r in series_rows if r["series_key"] == skey])
        result.leaderboards.append({"delivery_date": "all", "series_key": skey, "best": ranked[0]["method"],
                                    "ranking": [r["method"] for r in ranked]})
    by_type = {}
    for r in series_rows:
        value_type = r["series_key"].split("|", 1)[1]
        by_type.setdefault((value_type, r["method"]), []).append(r)
    result.aggregate_rows = [
        {"value_type": vt, "method": method, "series": len(rows), **_mean_row(rows)}
        for (vt, method), rows in sorted(by_type.items())
    ]


def combined_records(result: BacktestResult):
    """``(delivery_date, method, forecast)`` triples in a deterministic order."""
    out = []
    for as_of, method, fcs in result.combined:
        for fc in fcs:
            out.append((as_of, method, fc))
    out.sort(key=lambda t: (t[0], t[1], t[2].key, t[2].target_date))
    return out


def forecasts_for(result: BacktestResult, method: str, key: SeriesKey) -> list[QuantileForecast]:
    return [fc for _, m, fc in combined_records(result) if m == method and fc.key == key]
