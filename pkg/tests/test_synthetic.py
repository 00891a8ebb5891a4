from datetime import date

import numpy as np
import pytest

from quantens.core import SeriesKey, emit_forecast_csv, emit_observation_csv
from quantens.evaluation import bias, calibration
from quantens.synthetic import (
    ForecasterArchetype,
    Jump,
    SyntheticConfigError,
    TruthProcess,
    archetype_from_dict,
    config_from_dict,
    generate,
    generate_ensemble,
)

from conftest import KEY

WAVE = TruthProcess("logistic-wave", growth_rate=0.02, peak=2000, noise_sd=20, baseline=500)


def lead_one(obs, deliveries):
    fcs = [dl.get(KEY, dl.delivery_date) for dl in deliveries]
    return fcs, [obs.get(fc.target_date) for fc in fcs]


@pytest.mark.parametrize("kind", ["logistic-wave", "piecewise-linear", "noisy-random-walk"])
def test_truth_kinds_are_nonnegative_and_seeded(kind):
    truth = TruthProcess(kind, growth_rate=0.05, peak=100, noise_sd=40, baseline=10)
    a, _ = generate(truth, [ForecasterArchetype("m")], 60)
    b, _ = generate(truth, [ForecasterArchetype("m")], 60)
    assert min(a.points.values()) >= 0.0
    assert a == b


def test_same_seed_gives_identical_files():
    archs = [ForecasterArchetype("a"), ForecasterArchetype("b", bias=5, skew=3)]
    one = generate(WAVE, archs, 50, seed=4)
    two = generate(WAVE, archs, 50, seed=4)
    assert emit_forecast_csv(one[1]) == emit_forecast_csv(two[1])
    assert emit_observation_csv([one[0]]) == emit_observation_csv([two[0]])
    other = generate(WAVE, archs, 50, seed=5)
    assert emit_forecast_csv(other[1]) != emit_forecast_csv(one[1])


def test_calibrated_archetype_coverage():
    obs, dls = generate(WAVE, [ForecasterArchetype("cal")], 1000 + 13, seed=1)
    fcs, ys = lead_one(obs, dls)
    assert len(fcs) == 1000
    assert calibration(fcs, ys) == pytest.approx(0.75, abs=0.04)
    assert bias(fcs, ys) == pytest.approx(0.5, abs=0.04)


def test_biased_archetype_has_bias_near_one():
    obs, dls = generate(WAVE, [ForecasterArchetype("b", bias=200.0)], 300, seed=2)
    fcs, ys = lead_one(obs, dls)
    assert bias(fcs, ys) > 0.98


def test_quantiles_monotone_and_spread_grows_with_lead():
    _, dls = generate(WAVE, [ForecasterArchetype("s", skew=-4.0, spread=2.0)], 40)
    for dl in dls:
        widths = []
        for t in dl.forecast_dates(KEY):
            v = dl.get(KEY, t).values
            assert list(v) == sorted(v)
            widths.append(v[-1] - v[0])
        assert widths == sorted(widths)


def test_jump_leaves_earlier_deliveries_unchanged():
    jump = Jump(date(2021, 2, 1), 300.0)
    _, plain = generate(WAVE, [ForecasterArchetype("m", stream="s")], 60, seed=3)
    _, jumpy = generate(WAVE, [ForecasterArchetype("m", jump=jump, stream="s")], 60, seed=3)
    for a, b in zip(plain, jumpy):
        t = a.delivery_date
        diff = b.get(KEY, t).median - a.get(KEY, t).median
        if t < jump.start:
            assert a == b
        else:
            assert diff == pytest.approx(300.0)


def test_jump_limited_to_named_series():
    jump = Jump(date(2021, 1, 4), 50.0, series=("North West|hospital_inc",))
    assert jump.applies(SeriesKey("North West", "hospital_inc"), date(2021, 1, 5))
    assert not jump.applies(KEY, date(2021, 1, 5))


def test_late_starter_and_cadence():
    late = ForecasterArchetype("late", start=date(2021, 1, 20), cadence=3)
    _, dls = generate(WAVE, [late], 60)
    dates = [dl.delivery_date for dl in dls]
    assert dates[0] == date(2021, 1, 20)
    assert {(b - a).days for a, b in zip(dates, dates[1:])} == {3}


def test_ensemble_merges_series_per_delivery():
    keys = {KEY: WAVE, SeriesKey("North West", "hospital_inc"): TruthProcess("noisy-random-walk", 0.01, baseline=800)}
    data = generate_ensemble(keys, [ForecasterArchetype("a"), ForecasterArchetype("b")], 40)
    assert len(data.observations) == 2
    assert {dl.model for dl in data.deliveries} == {"a", "b"}
    assert all(len(dl.keys) == 2 for dl in data.deliveries)


@pytest.mark.parametrize("kwargs", [dict(days=20), dict(days=60, levels=(0.5, 0.25))])
def test_invalid_generation(kwargs):
    with pytest.raises(SyntheticConfigError):
        generate(WAVE, [ForecasterArchetype("a")], **kwargs)


def test_invalid_configs():
    with pytest.raises(SyntheticConfigError):
        TruthProcess("sine")
    with pytest.raises(SyntheticConfigError):
        ForecasterArchetype("a", spread=0.0)
    with pytest.raises(SyntheticConfigError):
        archetype_from_dict({"name": "a", "colour": "red"})
    with pytest.raises(SyntheticConfigError):
        archetype_from_dict({"name": "a", "jump": {"date": "2021-01-10"}})
    with pytest.raises(SyntheticConfigError):
        config_from_dict({"series": [], "archetypes": [{"name": "a"}]})
    with pytest.raises(SyntheticConfigError):
        generate(WAVE, [ForecasterArchetype("a"), ForecasterArchetype("a")], 60)


def test_config_round_trip():
    truths, archs, opts = config_from_dict({
        "days": 50, "start": "2021-03-01",
        "series": [{"region": "London", "value_type": "hospital_inc", "truth": {"kind": "piecewise-linear"}}],
        "archetypes": [{"name": "j", "jump": {"date": "2021-03-10", "magnitude": 5}, "start": "2021-03-02"}],
    })
    assert opts == {"days": 50, "start": date(2021, 3, 1)}
    assert truths[KEY].kind == "piecewise-linear"
    assert archs[0].jump == Jump(date(2021, 3, 10), 5.0) and archs[0].start == date(2021, 3, 2)
    assert np.isfinite(archs[0].standard_quantiles([0.1, 0.9])).all()
