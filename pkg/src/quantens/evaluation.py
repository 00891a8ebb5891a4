"""Sharpness, bias, calibration and interval-score evaluation of forecasts."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

from quantens.core import ObservationSeries, QuantileForecast
from quantens.distfit import complete_quantiles
from quantens.scoring import Interval, interval_score, quantile_score

SQRT2 = math.sqrt(2.0)
CENTRAL_75 = (0.125, 0.875)
SCORED_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)

REPORT_FIELDS = (
    "series_key", "method", "sharpness", "bias", "calibration",
    "b_hat", "c_hat", "distance", "mean_interval_score",
)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvaluationMetrics:
    sharpness: float
    bias: float
    calibration: float
    mean_interval_score: float

    @property
    def b_hat(self) -> float:
        return (0.5 - self.bias) / 0.5

    @property
    def c_hat(self) -> float:
        return (0.5 - self.calibration) / 0.5

    @property
    def distance(self) -> float:
        return math.hypot(self.b_hat, self.c_hat)

    def as_dict(self):
        d = asdict(self)
        d.update(b_hat=self.b_hat, c_hat=self.c_hat, distance=self.distance)
        return d


def _ensure(fc: QuantileForecast, levels) -> QuantileForecast:
    if all(fc.has_level(a) for a in levels):
        return fc
    try:
        return complete_quantiles(fc, levels)
    except ValueError as exc:
        raise EvaluationError(f"{fc.key} {fc.target_date}: cannot supply levels {levels}: {exc}") from None


def _matched(forecasts, obs):
    """Pair forecasts with observations; ``obs`` is a series or a sequence of values."""
    forecasts = list(forecasts)
    if isinstance(obs, ObservationSeries):
        pairs = [(fc, obs.get(fc.target_date)) for fc in forecasts]
        pairs = [(fc, w) for fc, w in pairs if w is not None]
    else:
        values = list(obs)
        if len(values) != len(forecasts):
            raise EvaluationError("forecasts and observations differ in length")
        pairs = list(zip(forecasts, values))
    if not pairs:
        raise EvaluationError("no forecast has a matching observation")
    return pairs


def sharpness(forecasts: Sequence[QuantileForecast]) -> float:
    """Mean width of the central 75% interval."""
    forecasts = list(forecasts)
    if not forecasts:
        raise EvaluationError("no forecasts")
    widths = []
    for fc in forecasts:
        fc = _ensure(fc, CENTRAL_75)
        widths.append(fc.value_at(0.875) - fc.value_at(0.125))
    return math.fsum(widths) / len(widths)


def bias(forecasts, obs) -> float:
    """Share of forecasts whose median exceeds the observation; ties count half."""
    pairs = _matched(forecasts, obs)
    total = 0.0
    for fc, w in pairs:
        m = _ensure(fc, (0.5,)).median
        total += 1.0 if m > w else 0.5 if m == w else 0.0
    return total / len(pairs)


def calibration(forecasts, obs) -> float:
    """Share of observations strictly inside the central 75% interval; boundary hits count half."""
    pairs = _matched(forecasts, obs)
    total = 0.0
    for fc, w in pairs:
        fc = _ensure(fc, CENTRAL_75)
        lo, hi = fc.value_at(0.125), fc.value_at(0.875)
        if lo < w < hi:
            total += 1.0
        elif w == lo or w == hi:
            total += 0.5
    return total / len(pairs)


def mean_interval_score(forecasts, obs) -> float:
    """Mean over dates of the averaged median, 50% and 90% interval scores."""
    pairs = _matched(forecasts, obs)
    per_date = []
    for fc, w in pairs:
        fc = _ensure(fc, SCORED_LEVELS)
        q = {a: fc.value_at(a) for a in SCORED_LEVELS}
        terms = (
            quantile_score(q[0.5], 0.5, w),
            interval_score(Interval(q[0.25], q[0.75], 0.5), w),
            interval_score(Interval(q[0.05], q[0.95], 0.1), w),
        )
        per_date.append(math.fsum(terms) / 3.0)
    return math.fsum(per_date) / len(per_date)


def evaluate(outputs: Mapping[str, Sequence[QuantileForecast]], obs) -> dict:
    """Metrics per method on the dates with observations.

    All methods must cover the same set of observed target dates.
    """
    results = {}
    reference = None
    for name in sorted(outputs):
        pairs = _matched(outputs[name], obs)
        dates = sorted(fc.target_date for fc, _ in pairs)
        if reference is None:
            reference = dates
        elif dates != reference:
            raise EvaluationError(f"method {name} covers different target dates from the others")
        fcs = [fc for fc, _ in pairs]
        ws = [w for _, w in pairs]
        results[name] = EvaluationMetrics(
            sharpness=sharpness(fcs),
            bias=bias(fcs, ws),
            calibration=calibration(fcs, ws),
            mean_interval_score=mean_interval_score(fcs, ws),
        )
    return results


def rank(metrics: Mapping[str, EvaluationMetrics]) -> list:
    """``(name, metrics)`` ordered by distance, then sharpness, then name."""
    return sorted(metrics.items(), key=lambda kv: (kv[1].distance, kv[1].sharpness, kv[0]))


def select_best(leaderboard) -> str:
    """Method closest to the calibration-bias origin; ties by sharpness, then name."""
    items = list(leaderboard.items()) if hasattr(leaderboard, "items") else list(leaderboard)
    if not items:
        raise EvaluationError("empty leaderboard")
    return min(items, key=lambda kv: (kv[1].distance, kv[1].sharpness, kv[0]))[0]


def bar_height(metrics: EvaluationMetrics) -> float:
    return SQRT2 - metrics.distance


def report_rows(series_key, metrics: Mapping[str, EvaluationMetrics], extra=None) -> list:
    rows = []
    for name, m in rank(metrics):
        row = dict(extra or {})
        row.update(series_key=str(series_key), method=name, **{k: m.as_dict()[k] for k in REPORT_FIELDS[2:]})
        rows.append(row)
    return rows


def report_csv(rows, leading=()) -> bytes:
    fields = list(leading) + list(REPORT_FIELDS)
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return out.getvalue().encode("utf-8")


def leaderboard_json(series_key, metrics: Mapping[str, EvaluationMetrics]) -> dict:
    return {
        "series_key": str(series_key),
        "best": select_best(metrics),
        "ranking": [dict(method=name, **m.as_dict()) for name, m in rank(metrics)],
    }


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
