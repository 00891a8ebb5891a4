"""Seeded synthetic truth series and forecaster archetypes.

A calibrated archetype forecasts ``signal + e_h`` where ``e_h`` is a random
walk of ``h - 1`` steps with the observation noise sd, and reports Gaussian
quantiles with sd ``noise_sd * sqrt(h)``. Observations are the signal plus
the same noise, so the reported quantiles match the law of the observation.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import skewnorm

from quantens.core import DEFAULT_HORIZON, DEFAULT_LEVELS, DEFAULT_TRAIN_WINDOW, ForecastDelivery, \
    ObservationSeries, QuantileForecast, SeriesKey

TRUTH_KINDS = ("logistic-wave", "piecewise-linear", "noisy-random-walk")
DEFAULT_START = date(2021, 1, 4)


class SyntheticConfigError(ValueError):
    pass


def _tag(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


@dataclass(frozen=True)
class TruthProcess:
    """Underlying signal plus Gaussian observation noise, truncated at zero.

    ``peak`` is the wave height above ``baseline``; ``peak_day`` defaults to
    the middle of the generated span. For the random walk ``growth_rate`` is
    the daily step sd relative to ``baseline``.
    """

    kind: str = "logistic-wave"
    growth_rate: float = 0.08
    peak: float = 1000.0
    noise_sd: float = 20.0
    baseline: float = 200.0
    peak_day: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in TRUTH_KINDS:
            raise SyntheticConfigError(f"unknown truth kind {self.kind!r}; choose from {', '.join(TRUTH_KINDS)}")
        if not self.noise_sd > 0:
            raise SyntheticConfigError("noise_sd must be positive")
        if self.growth_rate <= 0 or self.peak < 0 or self.baseline < 0:
            raise SyntheticConfigError("growth_rate must be positive; peak and baseline non-negative")

    def signal(self, days: int, rng: np.random.Generator) -> np.ndarray:
        t = np.arange(days, dtype=float)
        t_peak = days / 2.0 if self.peak_day is None else float(self.peak_day)
        if self.kind == "logistic-wave":
            s = 1.0 / (1.0 + np.exp(-self.growth_rate * (t - t_peak)))
            return self.baseline + 4.0 * self.peak * s * (1.0 - s)
        if self.kind == "piecewise-linear":
            half_width = 1.0 / self.growth_rate * 4.0
            return self.baseline + self.peak * np.maximum(0.0, 1.0 - np.abs(t - t_peak) / half_width)
        steps = rng.normal(0.0, self.growth_rate * max(self.baseline, 1.0), days)
        steps[0] = 0.0
        return np.abs(self.baseline + np.cumsum(steps))


@dataclass(frozen=True)
class Jump:
    """Shift of ``magnitude`` applied to every delivery made on or after ``start``.

    ``series`` limits the jump to the listed series keys (``region|value_type``).
    """

    start: date
    magnitude: float
    series: tuple | None = None

    def applies(self, key: SeriesKey, delivery_date: date) -> bool:
        if delivery_date < self.start:
            return False
        return self.series is None or str(key) in self.series


@dataclass(frozen=True)
class ForecasterArchetype:
    """A synthetic forecasting model.

    ``bias`` is added to every quantile. ``skew`` is the skew-normal shape of
    the reported spread, standardised to keep the median and sd fixed.
    ``stream`` names the random stream; two archetypes with the same stream
    draw identical forecast errors.
    """

    name: str
    bias: float = 0.0
    spread: float = 1.0
    skew: float = 0.0
    jump: Jump | None = None
    cadence: int = 1
    start: date | None = None
    stream: str | None = None

    def __post_init__(self):
        if not self.name:
            raise SyntheticConfigError("archetype name must be non-empty")
        if not self.spread > 0:
            raise SyntheticConfigError(f"{self.name}: spread multiplier must be positive")
        if self.cadence < 1:
            raise SyntheticConfigError(f"{self.name}: cadence must be at least 1 day")

    def standard_quantiles(self, levels) -> np.ndarray:
        """Unit-sd, zero-median offsets at ``levels``."""
        levels = np.asarray(levels, dtype=float)
        if self.skew == 0.0:
            return skewnorm.ppf(levels, 0.0)
        a = self.skew
        z = skewnorm.ppf(levels, a) - skewnorm.ppf(0.5, a)
        delta = a / math.sqrt(1.0 + a * a)
        return z / math.sqrt(1.0 - 2.0 * delta * delta / math.pi)


@dataclass(frozen=True)
class SyntheticData:
    observations: list
    deliveries: list = field(default_factory=list)


def _check_grid(levels):
    levels = tuple(float(a) for a in levels)
    if not levels or any(not 0.0 < a < 1.0 for a in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
        raise SyntheticConfigError("quantile grid must be strictly increasing inside (0, 1)")
    return levels


def generate(truth: TruthProcess, archetypes: Sequence[ForecasterArchetype], days: int,
             horizon: int = DEFAULT_HORIZON, levels=DEFAULT_LEVELS, seed: int = 0,
             key: SeriesKey = SeriesKey("London", "hospital_inc"), start: date = DEFAULT_START,
             train_window: int = DEFAULT_TRAIN_WINDOW):
    """Observations and forecast deliveries for one series.

    Each archetype delivers every ``cadence`` days from its start date,
    forecasting ``horizon`` days starting on the delivery date; deliveries
    whose horizon would run past the generated span are skipped.
    """
    levels = _check_grid(levels)
    if days < train_window + horizon:
        raise SyntheticConfigError(f"days={days} must be at least train window + horizon = {train_window + horizon}")
    names = [a.name for a in archetypes]
    if len(set(names)) != len(names):
        raise SyntheticConfigError("archetype names must be unique")
    key_tag = _tag(str(key))
    truth_seed = truth.seed if truth.seed is not None else seed
    rng = np.random.default_rng([truth_seed, key_tag, 0])
    signal = truth.signal(days, rng)
    noise = rng.normal(0.0, truth.noise_sd, days)
    obs_values = np.maximum(signal + noise, 0.0)
    obs = ObservationSeries(key, {start + timedelta(days=i): float(v) for i, v in enumerate(obs_values)})

    sigma = truth.noise_sd
    leads = np.arange(1, horizon + 1)
    deliveries = []
    for arch in archetypes:
        z = arch.standard_quantiles(levels)
        first = max(0, (arch.start - start).days) if arch.start is not None else 0
        stream = _tag(arch.stream or arch.name)
        for d0 in range(first, days - horizon + 1, arch.cadence):
            delivery_date = start + timedelta(days=d0)
            drng = np.random.default_rng([seed, key_tag, stream, delivery_date.toordinal()])
            steps = drng.normal(0.0, sigma, horizon)
            steps[0] = 0.0
            centre = signal[d0:d0 + horizon] + np.cumsum(steps) + arch.bias
            if arch.jump is not None and arch.jump.applies(key, delivery_date):
                centre = centre + arch.jump.magnitude
            sd = arch.spread * sigma * np.sqrt(leads)
            values = np.maximum(centre[:, None] + sd[:, None] * z[None, :], 0.0)
            fcs = {}
            for h in range(horizon):
                target = delivery_date + timedelta(days=h)
                fcs[(key, target)] = QuantileForecast(key, target, levels, tuple(float(v) for v in values[h]))
            deliveries.append(ForecastDelivery(arch.name, delivery_date, fcs))
    return obs, deliveries


def generate_ensemble(truths: Mapping[SeriesKey, TruthProcess], archetypes: Sequence[ForecasterArchetype],
                      days: int, horizon: int = DEFAULT_HORIZON, levels=DEFAULT_LEVELS, seed: int = 0,
                      start: date = DEFAULT_START, train_window: int = DEFAULT_TRAIN_WINDOW) -> SyntheticData:
    """Several series, with each model's deliveries merged across series."""
    observations = []
    merged = {}
    for key in sorted(truths):
        obs, deliveries = generate(truths[key], archetypes, days, horizon, levels, seed, key, start, train_window)
        observations.append(obs)
        for dl in deliveries:
            merged.setdefault((dl.model, dl.delivery_date), {}).update(dl.forecasts)
    out = [ForecastDelivery(m, d, fcs) for (m, d), fcs in sorted(merged.items())]
    return SyntheticData(observations, out)


def _parse_date(text, what):
    try:
        return date.fromisoformat(text)
    except (TypeError, ValueError):
        raise SyntheticConfigError(f"{what}: invalid ISO date {text!r}") from None


def archetype_from_dict(d: Mapping) -> ForecasterArchetype:
    d = dict(d)
    unknown = set(d) - {"name", "bias", "spread", "skew", "jump", "cadence", "start", "stream"}
    if unknown:
        raise SyntheticConfigError(f"unknown archetype fields: {', '.join(sorted(unknown))}")
    if "name" not in d:
        raise SyntheticConfigError("archetype needs a name")
    jump = d.get("jump")
    if jump is not None:
        try:
            series = jump.get("series")
            jump = Jump(_parse_date(jump["date"], f"{d['name']} jump"), float(jump["magnitude"]),
                        tuple(series) if series is not None else None)
        except (KeyError, TypeError, AttributeError):
            raise SyntheticConfigError(f"{d['name']}: jump needs 'date' and 'magnitude'") from None
    start = _parse_date(d["start"], f"{d['name']} start") if d.get("start") is not None else None
    try:
        return ForecasterArchetype(
            name=str(d["name"]), bias=float(d.get("bias", 0.0)), spread=float(d.get("spread", 1.0)),
            skew=float(d.get("skew", 0.0)), jump=jump, cadence=int(d.get("cadence", 1)), start=start,
            stream=d.get("stream"),
        )
    except (TypeError, ValueError) as exc:
        raise SyntheticConfigError(f"archetype {d['name']}: {exc}") from None


def truth_from_dict(d: Mapping) -> TruthProcess:
    fields = {"kind", "growth_rate", "peak", "noise_sd", "baseline", "peak_day", "seed"}
    unknown = set(d) - fields
    if unknown:
        raise SyntheticConfigError(f"unknown truth fields: {', '.join(sorted(unknown))}")
    try:
        return TruthProcess(**d)
    except TypeError as exc:
        raise SyntheticConfigError(str(exc)) from None


def config_from_dict(cfg: Mapping):
    """Parse a JSON synth config into ``(truths, archetypes, options)``.

    ``series`` is a list of ``{"region", "value_type", "truth": {...}}``;
    ``archetypes`` a list of archetype objects; ``days`` and ``start`` are
    optional.
    """
    if not isinstance(cfg, Mapping):
        raise SyntheticConfigError("config must be a JSON object")
    series = cfg.get("series")
    archetypes = cfg.get("archetypes")
    if not series or not archetypes:
        raise SyntheticConfigError("config needs non-empty 'series' and 'archetypes' lists")
    truths = {}
    for s in series:
        try:
            key = SeriesKey(s["region"], s["value_type"])
        except (KeyError, TypeError):
            raise SyntheticConfigError("each series needs 'region' and 'value_type'") from None
        truths[key] = truth_from_dict(s.get("truth", {}))
    options = {}
    if "days" in cfg:
        options["days"] = int(cfg["days"])
    if "start" in cfg:
        options["start"] = _parse_date(cfg["start"], "start")
    return truths, [archetype_from_dict(a) for a in archetypes], options
