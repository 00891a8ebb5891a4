import math
import subprocess
import sys
from datetime import date

import pytest

from quantens.backtest import METHODS, MethodUnavailable, RunConfig, combine_series, fit_seed, run_backtest
from quantens.core import ObservationSeries, SeriesKey
from quantens.synthetic import ForecasterArchetype, Jump, TruthProcess, generate_ensemble

FAST = RunConfig(swarm_size=12, iterations=15)
NW = SeriesKey("North West", "hospital_inc")
LONDON = SeriesKey("London", "hospital_inc")


@pytest.fixture(scope="module")
def ensemble():
    truths = {LONDON: TruthProcess("logistic-wave", 0.06, 1500, 25, 300),
              NW: TruthProcess("noisy-random-walk", 0.01, noise_sd=20, baseline=800)}
    archs = [ForecasterArchetype("cal"), ForecasterArchetype("hi", bias=40, spread=0.8),
             ForecasterArchetype("late", start=date(2021, 1, 20))]
    return generate_ensemble(truths, archs, 42, seed=5)


@pytest.fixture(scope="module")
def both(ensemble):
    return run_backtest(ensemble.deliveries, ensemble.observations, ["stacked-equal", "qra"], FAST, every=3)


def test_one_date_one_method_gives_one_row_per_series(ensemble):
    res = run_backtest(ensemble.deliveries, ensemble.observations, ["stacked-equal"], FAST, every=100)
    assert len(res.rows) == 2
    assert {lb["delivery_date"] for lb in res.leaderboards} >= {"all"}


def test_methods_are_isolated(ensemble, both):
    alone = run_backtest(ensemble.deliveries, ensemble.observations, ["qra"], FAST, every=3)
    assert alone.rows == [r for r in both.rows if r["method"] == "qra"]


def test_aggregates_are_means_of_series_rows(both):
    for agg in both.aggregate_rows:
        rows = [r for r in both.series_rows
                if r["method"] == agg["method"] and r["series_key"].endswith("|" + agg["value_type"])]
        assert agg["series"] == len(rows)
        for f in ("distance", "mean_interval_score", "sharpness"):
            assert agg[f] == pytest.approx(math.fsum(r[f] for r in rows) / len(rows), rel=1e-12)


def test_scenario_one_excludes_late_model_until_window_fills(ensemble):
    as_of = date(2021, 1, 24)
    comb = combine_series(ensemble.deliveries, ensemble.observations[0], LONDON, as_of, "stacked-equal", FAST)
    assert comb.parameters["models"] == ["cal", "hi"]
    scen2 = RunConfig(swarm_size=12, iterations=15, include_incomplete=True)
    comb = combine_series(ensemble.deliveries, ensemble.observations[0], LONDON, as_of, "stacked-equal", scen2)
    assert comb.parameters["weights"]["late"] == pytest.approx(1 / 3)


def test_future_observations_cannot_leak(ensemble):
    as_of = date(2021, 1, 26)
    obs = ensemble.observations[0]
    tampered = ObservationSeries(obs.key, {d: (v if d < as_of else v + 1e4) for d, v in obs.points.items()})
    for method in METHODS:
        a = combine_series(ensemble.deliveries, obs, LONDON, as_of, method, FAST)
        b = combine_series(ensemble.deliveries, tampered, LONDON, as_of, method, FAST)
        assert a.forecasts == b.forecasts, method


def test_reproducible(ensemble, both):
    again = run_backtest(ensemble.deliveries, ensemble.observations, ["stacked-equal", "qra"], FAST, every=3)
    assert again.rows == both.rows and again.leaderboards == both.leaderboards


def test_regression_without_training_raises_with_fallback(ensemble):
    with pytest.raises(MethodUnavailable, match="stacked-equal"):
        combine_series(ensemble.deliveries, ensemble.observations[0], LONDON, date(2021, 1, 10), "qra", FAST)


def test_fit_seed_is_stable_and_kind_specific():
    d = date(2021, 2, 1)
    assert fit_seed(0, LONDON, d, "qra") == fit_seed(0, LONDON, d, "qra")
    assert fit_seed(0, LONDON, d, "qra") != fit_seed(0, LONDON, d, "emos")
    assert 0 <= fit_seed(2 ** 40, NW, d, "qra") < 2 ** 32


def test_sqra_beats_qra_on_jump_delivery():
    truths = {NW: TruthProcess("noisy-random-walk", 0.01, noise_sd=20, baseline=800)}
    jump_day = date(2021, 1, 24)
    archs = [ForecasterArchetype("jumpy", jump=Jump(jump_day, 300.0)), ForecasterArchetype("steady")]
    data = generate_ensemble(truths, archs, 34, seed=1)
    res = run_backtest(data.deliveries, data.observations, ["qra", "sqra"], RunConfig())
    by = {r["method"]: r for r in res.rows if r["delivery_date"] == jump_day.isoformat()}
    assert by["sqra"]["mean_interval_score"] < by["qra"]["mean_interval_score"]


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "quantens", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "backtest" in out.stdout
