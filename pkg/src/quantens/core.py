"""Domain types and CSV ingestion/serialization for quantile forecasts."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_VALUE_TYPES = ("death_inc_line", "hospital_inc", "hospital_prev", "icu_prev")
DEFAULT_REGIONS = (
    "England",
    "Scotland",
    "Wales",
    "Northern Ireland",
    "London",
    "East of England",
    "Midlands",
    "North East and Yorkshire",
    "North West",
    "South East",
    "South West",
)
DEFAULT_LEVELS = (0.05, 0.125, 0.25, 0.5, 0.75, 0.875, 0.95)
DEFAULT_HORIZON = 14
DEFAULT_TRAIN_WINDOW = 20

FORECAST_HEADER = ("model", "delivery_date", "region", "value_type", "target_date", "quantile", "value")
OBSERVATION_HEADER = ("region", "value_type", "date", "value")

LEVEL_DECIMALS = 10


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def level_key(alpha: float) -> float:
    """Canonical form of a quantile level for matching across sources."""
    return round(float(alpha), LEVEL_DECIMALS)


@dataclass(frozen=True, order=True)
class SeriesKey:
    region: str
    value_type: str

    def __post_init__(self):
        if not self.region or not self.value_type:
            raise DataError("region and value_type must be non-empty")

    def check(self, regions=DEFAULT_REGIONS, value_types=DEFAULT_VALUE_TYPES):
        """Raise if the key falls outside the configured sets (``None`` allows anything)."""
        if regions is not None and self.region not in regions:
            raise DataError(f"unknown region {self.region!r}")
        if value_types is not None and self.value_type not in value_types:
            raise DataError(f"unknown value type {self.value_type!r}")
        return self

    def __str__(self):
        return f"{self.region}|{self.value_type}"


@dataclass(frozen=True)
class QuantileForecast:
    """Predictive quantiles of one model for one series and target date."""

    key: SeriesKey
    target_date: date
    levels: tuple
    values: tuple

    def __post_init__(self):
        levels = tuple(float(a) for a in self.levels)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", values)
        if len(levels) != len(values):
            raise DataError("levels and values differ in length")
        if not levels:
            raise DataError("a forecast needs at least one quantile level")
        for a in levels:
            if not 0.0 < a < 1.0:
                raise DataError(f"quantile level {a} outside (0, 1)")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise DataError("quantile levels must be strictly increasing")
        if not all(math.isfinite(v) for v in values):
            raise DataError("quantile values must be finite")
        if any(b < a for a, b in zip(values, values[1:])):
            raise DataError("quantile values must be non-decreasing in level")

    @classmethod
    def from_pairs(cls, key, target_date, pairs, repair=True):
        """Build from unordered ``(level, value)`` pairs, sorting values if they cross."""
        pairs = sorted((float(a), float(v)) for a, v in pairs)
        levels = [a for a, _ in pairs]
        values = [v for _, v in pairs]
        if repair and any(b < a for a, b in zip(values, values[1:])):
            logger.warning("non-monotone quantiles for %s %s repaired by sorting", key, target_date)
            values = sorted(values)
        return cls(key, target_date, tuple(levels), tuple(values))

    def value_at(self, alpha: float) -> float:
        """Reported value at ``alpha``; ``KeyError`` if the level was not reported."""
        k = level_key(alpha)
        for a, v in zip(self.levels, self.values):
            if level_key(a) == k:
                return v
        raise KeyError(alpha)

    def has_level(self, alpha: float) -> bool:
        k = level_key(alpha)
        return any(level_key(a) == k for a in self.levels)

    @property
    def median(self) -> float:
        return self.value_at(0.5)

    def as_arrays(self):
        return np.asarray(self.levels), np.asarray(self.values)

    def shifted(self, offset: float) -> "QuantileForecast":
        return QuantileForecast(self.key, self.target_date, self.levels, tuple(v + offset for v in self.values))


@dataclass(frozen=True)
class ForecastDelivery:
    """A model's dated batch of forecasts, keyed by ``(SeriesKey, target_date)``."""

    model: str
    delivery_date: date
    forecasts: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.model:
            raise DataError("model id must be non-empty")
        for (key, target), fc in self.forecasts.items():
            if fc.key != key or fc.target_date != target:
                raise DataError(f"forecast stored under mismatched key {key} {target}")
        object.__setattr__(self, "forecasts", MappingProxyType(dict(self.forecasts)))

    @property
    def keys(self):
        return sorted({key for key, _ in self.forecasts})

    def get(self, key: SeriesKey, target: date):
        return self.forecasts.get((key, target))

    def target_dates(self, key: SeriesKey):
        return sorted(t for k, t in self.forecasts if k == key)

    def forecast_dates(self, key: SeriesKey):
        """Target dates on or after the delivery date; earlier ones are training predictions."""
        return [t for t in self.target_dates(key) if t >= self.delivery_date]

    def check_horizon(self, horizon: int = DEFAULT_HORIZON):
        """Raise unless every series covers ``horizon`` contiguous target dates."""
        for key in self.keys:
            dates = self.forecast_dates(key)
            if len(dates) != horizon or (dates[-1] - dates[0]).days != horizon - 1:
                raise DataError(
                    f"{self.model} {self.delivery_date} {key}: expected {horizon} contiguous target dates, "
                    f"got {len(dates)}"
                )
        return self


@dataclass(frozen=True)
class ObservationSeries:
    key: SeriesKey
    points: Mapping = field(default_factory=dict)

    def __post_init__(self):
        for d, v in self.points.items():
            if not math.isfinite(v):
                raise DataError(f"non-finite observation for {self.key} on {d}")
        object.__setattr__(self, "points", MappingProxyType(dict(sorted(self.points.items()))))

    def get(self, d: date):
        return self.points.get(d)

    @property
    def dates(self):
        return list(self.points)


@dataclass(frozen=True)
class TrainingWindow:
    """Past forecasts of one model paired with observations.

    ``pairs`` holds ``(QuantileForecast, observed value)`` sorted by date and
    covers at most the ``length_days`` days before ``as_of``. ``anchor`` is the
    most recent prior forecast for ``as_of`` itself (no observation needed);
    the shifted-QRA correction uses it.
    """

    model: str
    key: SeriesKey
    as_of: date
    length_days: int
    pairs: tuple = ()
    anchor: QuantileForecast | None = None

    def __len__(self):
        return len(self.pairs)

    @property
    def dates(self):
        return [fc.target_date for fc, _ in self.pairs]

    def day_index(self, d: date) -> int:
        """1-based position of ``d`` in the window; ``length_days`` is the day before ``as_of``."""
        return self.length_days - (self.as_of - d).days + 1

    @property
    def is_complete(self) -> bool:
        return len(self.pairs) == self.length_days


def _parse_date(text, line):
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"line {line}: invalid date {text!r}") from None


def _parse_float(text, line, what):
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"line {line}: invalid {what} {text!r}") from None
    if not math.isfinite(v):
        raise DataError(f"line {line}: non-finite {what} {text!r}")
    return v


def _reader(data, header):
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    reader = csv.reader(io.StringIO(data))
    first = next(reader, None)
    if first is None:
        return []
    if tuple(h.strip() for h in first) != header:
        raise DataError(f"line 1: expected header {','.join(header)}")
    rows = []
    for i, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {i}: expected {len(header)} fields, got {len(row)}")
        rows.append((i, [c.strip() for c in row]))
    return rows


def parse_forecast_csv(data, regions=None, value_types=None) -> list[ForecastDelivery]:
    """Parse the forecast CSV schema into deliveries sorted by (model, delivery date).

    ``regions``/``value_types`` restrict the accepted series keys when given.
    """
    cells = {}
    for line, (model, delivery, region, value_type, target, quantile, value) in _reader(data, FORECAST_HEADER):
        if not model:
            raise DataError(f"line {line}: empty model id")
        key = SeriesKey(region, value_type)
        try:
            key.check(regions, value_types)
        except DataError as exc:
            raise DataError(f"line {line}: {exc}") from None
        alpha = _parse_float(quantile, line, "quantile")
        if not 0.0 < alpha < 1.0:
            raise DataError(f"line {line}: quantile {alpha} outside (0, 1)")
        v = _parse_float(value, line, "value")
        d_del = _parse_date(delivery, line)
        d_tgt = _parse_date(target, line)
        slot = cells.setdefault((model, d_del), {}).setdefault((key, d_tgt), {})
        k = level_key(alpha)
        if k in slot and slot[k][1] != v:
            raise DataError(
                f"line {line}: duplicate quantile {alpha} for {model} {d_del} {key} {d_tgt} "
                f"with differing values ({slot[k][1]} vs {v})"
            )
        slot[k] = (alpha, v)
    deliveries = []
    for (model, d_del), by_target in sorted(cells.items()):
        forecasts = {
            (key, tgt): QuantileForecast.from_pairs(key, tgt, pairs.values())
            for (key, tgt), pairs in by_target.items()
        }
        deliveries.append(ForecastDelivery(model, d_del, forecasts))
    return deliveries


def parse_observation_csv(data, regions=None, value_types=None) -> list[ObservationSeries]:
    points = {}
    for line, (region, value_type, d, value) in _reader(data, OBSERVATION_HEADER):
        key = SeriesKey(region, value_type)
        try:
            key.check(regions, value_types)
        except DataError as exc:
            raise DataError(f"line {line}: {exc}") from None
        day = _parse_date(d, line)
        v = _parse_float(value, line, "value")
        series = points.setdefault(key, {})
        if day in series and series[day] != v:
            raise DataError(f"line {line}: conflicting observations for {key} on {day}")
        series[day] = v
    return [ObservationSeries(key, pts) for key, pts in sorted(points.items())]


def _fmt(v: float) -> str:
    return repr(float(v))


def emit_combined_csv(forecasts: Iterable[QuantileForecast], method: str, delivery_date: date | None = None) -> bytes:
    """Serialize forecasts in the input schema with ``model`` set to ``method``.

    ``delivery_date`` defaults to the earliest target date (the window start).
    """
    forecasts = list(forecasts)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(FORECAST_HEADER)
    if forecasts and delivery_date is None:
        delivery_date = min(fc.target_date for fc in forecasts)
    for fc in sorted(forecasts, key=lambda f: (f.key, f.target_date)):
        for a, v in zip(fc.levels, fc.values):
            writer.writerow(
                [method, delivery_date.isoformat(), fc.key.region, fc.key.value_type,
                 fc.target_date.isoformat(), _fmt(a), _fmt(v)]
            )
    return out.getvalue().encode("utf-8")


def emit_forecast_csv(deliveries: Iterable[ForecastDelivery]) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(FORECAST_HEADER)
    for dl in sorted(deliveries, key=lambda d: (d.model, d.delivery_date)):
        for (key, tgt) in sorted(dl.forecasts):
            fc = dl.forecasts[(key, tgt)]
            for a, v in zip(fc.levels, fc.values):
                writer.writerow(
                    [dl.model, dl.delivery_date.isoformat(), key.region, key.value_type,
                     tgt.isoformat(), _fmt(a), _fmt(v)]
                )
    return out.getvalue().encode("utf-8")


def emit_observation_csv(series: Iterable[ObservationSeries]) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(OBSERVATION_HEADER)
    for s in sorted(series, key=lambda s: s.key):
        for d, v in s.points.items():
            writer.writerow([s.key.region, s.key.value_type, d.isoformat(), _fmt(v)])
    return out.getvalue().encode("utf-8")


def build_training_window(
    deliveries: Sequence[ForecastDelivery],
    obs: ObservationSeries,
    model: str,
    key: SeriesKey,
    as_of: date,
    length_days: int = DEFAULT_TRAIN_WINDOW,
) -> TrainingWindow:
    """Pair a model's past forecasts with observations for the days before ``as_of``.

    For each target day the latest delivery made on or before that day (and
    strictly before ``as_of``) supplies the forecast. Days lacking a forecast
    or an observation are left out.
    """
    prior = sorted(
        (d for d in deliveries if d.model == model and d.delivery_date < as_of),
        key=lambda d: d.delivery_date,
        reverse=True,
    )

    def latest(target):
        for dl in prior:
            if dl.delivery_date <= target:
                fc = dl.get(key, target)
                if fc is not None:
                    return fc
        return None

    pairs = []
    for offset in range(length_days, 0, -1):
        day = as_of - timedelta(days=offset)
        w = obs.get(day) if obs is not None else None
        if w is None:
            continue
        fc = latest(day)
        if fc is not None:
            pairs.append((fc, w))
    return TrainingWindow(model, key, as_of, length_days, tuple(pairs), latest(as_of))
