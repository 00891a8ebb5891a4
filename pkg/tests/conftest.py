from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import settings
from scipy.stats import norm

from quantens.core import DEFAULT_LEVELS, ForecastDelivery, ObservationSeries, QuantileForecast, SeriesKey
from quantens.pso import PsoConfig

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

KEY = SeriesKey("London", "hospital_inc")
D0 = date(2021, 1, 4)


def gaussian_forecast(mu, sd, target=D0, levels=DEFAULT_LEVELS, key=KEY):
    return QuantileForecast(key, target, tuple(levels), tuple(mu + sd * norm.ppf(levels)))


def day(i):
    return D0 + timedelta(days=i)


def delivery(model, delivered, forecasts):
    return ForecastDelivery(model, delivered, {(fc.key, fc.target_date): fc for fc in forecasts})


def series(values, key=KEY, start=0):
    return ObservationSeries(key, {day(start + i): float(v) for i, v in enumerate(values)})


@pytest.fixture
def small_pso():
    """Cheap swarm for tests that only need a plausible optimum."""
    return PsoConfig(bounds=((0.0, 1.0),), swarm_size=20, iterations=60, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
