import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm, uniform

from quantens.core import QuantileForecast
from quantens.scoring import (
    Interval,
    crps_from_quantiles,
    crps_gaussian,
    crps_samples,
    forecast_quantile_score_sum,
    interval_score,
    log_score,
    quantile_score,
)

from conftest import KEY, D0, gaussian_forecast


@pytest.mark.parametrize("q, alpha, w, expected", [(10, 0.5, 12, 2.0), (10, 0.1, 5, 9.0), (3, 0.7, 3, 0.0)])
def test_quantile_score_hand_values(q, alpha, w, expected):
    assert quantile_score(q, alpha, w) == expected


@pytest.mark.parametrize("w, expected", [(15, 10.0), (25, 110.0), (5, 110.0)])
def test_interval_score_hand_values(w, expected):
    assert interval_score(Interval(10, 20, 0.1), w) == expected


def test_degenerate_interval_at_data_scores_zero():
    assert interval_score(Interval(4, 4, 0.5), 4) == 0.0
    with pytest.raises(ValueError):
        Interval(2, 1, 0.5)


def test_log_score():
    assert log_score(norm(0, 1), 0.0).value == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-12)
    assert log_score(uniform(0, 1), 0.3).value == pytest.approx(0.0)
    s = log_score(uniform(0, 1), 2.0)
    assert s.infinite and math.isinf(s.value)


def test_crps_samples_pair_example():
    assert crps_samples([0.0, 2.0], 1.0) == pytest.approx(0.5)


@given(st.floats(-100, 100), st.floats(-100, 100))
def test_single_sample_crps_is_absolute_error(c, w):
    assert crps_samples([c], w) == pytest.approx(abs(c - w), abs=1e-9)


def test_crps_samples_all_at_w():
    assert crps_samples(np.full(50, 3.0), 3.0) == 0.0


def test_exact_and_sorted_pair_terms_agree(rng):
    x = rng.normal(size=2001)
    brute = np.abs(x[:, None] - x[None, :]).mean()
    fast = crps_samples(x, 0.3)
    assert fast == pytest.approx(np.abs(x - 0.3).mean() - 0.5 * brute, rel=1e-12)


def test_crps_gaussian_closed_form():
    assert crps_gaussian(0, 1, 0) == pytest.approx(2 * norm.pdf(0) - 1 / math.sqrt(math.pi), abs=1e-15)
    assert crps_gaussian(0, 1, 0) == pytest.approx(0.23370, abs=1e-5)
    with pytest.raises(ValueError):
        crps_gaussian(0, 0, 1)


def test_crps_gaussian_far_tail_approaches_absolute_error(rng):
    w = 40.0
    assert crps_gaussian(0, 1, w) == pytest.approx(abs(w), rel=2e-2)
    assert crps_gaussian(0, 1, w) == pytest.approx(crps_samples(rng.normal(size=4000), w), rel=1e-3)


def test_crps_from_quantiles():
    fc = QuantileForecast(KEY, D0, (0.5,), (4.0,))
    assert crps_from_quantiles(fc, 1.0) == 3.0
    dense = gaussian_forecast(0.0, 1.0, levels=np.round(np.arange(1, 200) / 200, 3))
    assert crps_from_quantiles(dense, 0.0) == pytest.approx(crps_gaussian(0, 1, 0), rel=0.01)
    flat = QuantileForecast(KEY, D0, (0.1, 0.5, 0.9), (2.0, 2.0, 2.0))
    assert crps_from_quantiles(flat, 2.0) == 0.0


def test_forecast_quantile_score_sum():
    fc = QuantileForecast(KEY, D0, (0.25, 0.5, 0.75), (5.0, 7.0, 9.0))
    assert forecast_quantile_score_sum(fc, 7.0) == 2.0
    assert forecast_quantile_score_sum(QuantileForecast(KEY, D0, (0.25, 0.75), (7.0, 7.0)), 7.0) == 0.0


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 0.99))
def test_quantile_score_is_nonnegative(q, w, alpha):
    assert quantile_score(q, alpha, w) >= 0.0
