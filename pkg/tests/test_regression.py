import math

import numpy as np
import pytest
from scipy.stats import norm

from quantens import kernels
from quantens.core import TrainingWindow
from quantens.pso import PsoConfig
from quantens.regression import (
    EmosCoefficients,
    EnsembleStats,
    InsufficientDataError,
    QraCoefficients,
    SqraShift,
    compute_sqra_shift,
    fit_emos,
    fit_qra,
    predict_emos,
    predict_qra,
    predict_sqra,
    qra_design,
    qra_objective,
)

from conftest import KEY, day, delivery, gaussian_forecast

LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)


def window(model, forecasts, obs, anchor=None):
    pairs = tuple(zip(forecasts, (float(y) for y in obs)))
    return TrainingWindow(model, KEY, day(len(pairs)), len(pairs), pairs, anchor)


def gaussian_series(means, sd, levels=LEVELS):
    return [gaussian_forecast(m, sd, target=day(i), levels=levels) for i, m in enumerate(means)]


def emos_problem(seed, n=200):
    rng = np.random.default_rng(seed)
    m1, m2 = rng.normal(100, 10, n), rng.normal(100, 10, n)
    y = 0.5 * m1 + 0.5 * m2 + rng.normal(size=n)
    return {"a": window("a", gaussian_series(m1, 1.0, (0.5,)), y), "b": window("b", gaussian_series(m2, 1.0, (0.5,)), y)}


@pytest.mark.parametrize("seed", range(5))
def test_emos_recovers_generating_process(seed):
    windows = emos_problem(seed)
    coeffs = fit_emos(windows)
    assert coeffs.slopes["a"] == pytest.approx(0.5, abs=0.1)
    assert coeffs.slopes["b"] == pytest.approx(0.5, abs=0.1)
    spreads = [EnsembleStats.from_forecasts({m: w.pairs[i][0] for m, w in windows.items()}).spread for i in range(200)]
    sd = np.mean([math.sqrt(coeffs.variance(s)) for s in spreads])
    assert sd == pytest.approx(1.0, rel=0.2)


def test_emos_exact_fit_hits_variance_floor(rng):
    m = rng.normal(100, 10, 40)
    coeffs = fit_emos({"a": window("a", gaussian_series(m, 1.0, (0.5,)), m)})
    assert coeffs.slopes["a"] == pytest.approx(1.0, abs=1e-3)
    assert coeffs.variance(0.0) == pytest.approx(coeffs.variance_floor, rel=0.5, abs=1e-3)


def test_emos_negative_relation_hits_zero_slope(rng):
    # centred covariate so the unconstrained through-origin slope is negative
    m = rng.normal(0, 3, 40)
    coeffs = fit_emos({"a": window("a", gaussian_series(m, 1.0, (0.5,)), -m + 10)})
    assert coeffs.slopes["a"] == 0.0
    assert coeffs.intercept == 0.0


def test_emos_needs_five_complete_days(rng):
    m = rng.normal(5, 1, 4)
    with pytest.raises(InsufficientDataError):
        fit_emos({"a": window("a", gaussian_series(m, 1.0, (0.5,)), m)})


def test_predict_emos():
    stats = EnsembleStats(KEY, day(0), {"a": 7.0, "b": 3.0})
    out = predict_emos(EmosCoefficients({"a": 1.0, "b": 0.0}, c=1.0, d=0.0), stats, LEVELS)
    np.testing.assert_allclose(out.values, 7.0 + norm.ppf(LEVELS), atol=1e-12)
    assert out.median == 7.0
    wide = predict_emos(EmosCoefficients({"a": 0.5, "b": 0.5}, c=4.0, d=0.0), stats, (0.025, 0.975))
    assert wide.values[1] - wide.values[0] == pytest.approx(7.8398, abs=1e-4)


def calibrated_problem(rng, n=200, models=("a",), bias=0.0):
    mu = rng.uniform(50, 150, n)
    y = mu + rng.normal(0, 5, n)
    return {m: window(m, gaussian_series(mu + bias, 5.0), y) for m in models}


def test_qra_calibrated_single_model(rng):
    coeffs = fit_qra(calibrated_problem(rng), LEVELS)
    assert coeffs.slopes["a"] == pytest.approx(1.0, abs=0.05)


def test_qra_duplicate_models(rng):
    single = calibrated_problem(rng)
    dup = {"a": single["a"], "b": TrainingWindow("b", KEY, single["a"].as_of, 200, single["a"].pairs)}
    one, two = fit_qra(single, LEVELS), fit_qra(dup, LEVELS)
    assert two.slopes["a"] + two.slopes["b"] == pytest.approx(1.0, abs=0.05)
    assert two.objective == pytest.approx(one.objective, abs=1e-6)


def test_qra_shrinks_uniformly_biased_ensemble(rng):
    windows = calibrated_problem(rng, models=("a", "b"), bias=20.0)
    coeffs = fit_qra(windows, LEVELS)
    assert sum(coeffs.slopes.values()) < 1.0
    models, Y, obs = qra_design(windows, LEVELS)
    assert coeffs.objective < qra_objective([0.5, 0.5], Y, obs, np.array(LEVELS))


def test_qra_two_model_optimum_near_grid(rng):
    mu = rng.uniform(50, 150, 60)
    y = mu + rng.normal(0, 5, 60)
    windows = {"a": window("a", gaussian_series(0.7 * mu, 5.0), y), "b": window("b", gaussian_series(mu + 30, 8.0), y)}
    models, Y, obs = qra_design(windows, LEVELS)
    g = np.round(np.arange(0, 2.0001, 0.01), 2)
    B1, B2 = np.meshgrid(g, g, indexing="ij")
    vals = kernels.qra_objective_batch(np.column_stack([B1.ravel(), B2.ravel()]), Y, obs, np.array(LEVELS))
    best = np.array([B1.ravel()[vals.argmin()], B2.ravel()[vals.argmin()]])
    coeffs = fit_qra(windows, LEVELS)
    np.testing.assert_allclose([coeffs.slopes[m] for m in models], best, atol=0.02)


def test_predict_qra_linearity():
    a = gaussian_forecast(10.0, 2.0, levels=LEVELS)
    b = gaussian_forecast(30.0, 1.0, levels=LEVELS)
    assert predict_qra(QraCoefficients({"a": 1.0}), {"a": a}, LEVELS).values == a.values
    same = predict_qra(QraCoefficients({"a": 0.5, "b": 0.5}), {"a": a, "b": a}, LEVELS)
    np.testing.assert_allclose(same.values, a.values, atol=1e-12)
    doubled = predict_qra(QraCoefficients({"a": 2.0, "b": 0.0}), {"a": a, "b": b}, LEVELS)
    np.testing.assert_allclose(doubled.values, 2 * np.array(a.values))


def _shift_setup(anchor_median=None, pair_medians=(), current_median=500.0):
    t0 = day(10)
    current = delivery("m", t0, [gaussian_forecast(current_median, 10.0, target=t0, levels=LEVELS)])
    pairs = [gaussian_forecast(v, 10.0, target=day(i), levels=LEVELS) for i, v in enumerate(pair_medians)]
    anchor = gaussian_forecast(anchor_median, 10.0, target=t0, levels=LEVELS) if anchor_median is not None else None
    w = TrainingWindow("m", KEY, t0, 10, tuple((fc, 0.0) for fc in pairs), anchor)
    return current, w


def test_sqra_shift_cases():
    current, w = _shift_setup(anchor_median=500.0, pair_medians=(100.0,))
    assert compute_sqra_shift(current, w).offsets["m"] == pytest.approx(0.0, abs=1e-9)
    current, w = _shift_setup(anchor_median=300.0, pair_medians=(100.0,))
    s = compute_sqra_shift(current, w)
    assert s.offsets["m"] == pytest.approx(200.0) and not s.fallback
    current, w = _shift_setup(pair_medians=(260.0, 280.0))
    s = compute_sqra_shift(current, w)
    assert s.offsets["m"] == pytest.approx(220.0) and s.fallback == {"m"}
    current, w = _shift_setup()
    s = compute_sqra_shift(current, w)
    assert s.offsets["m"] == 0.0 and s.missing == {"m"}


def test_sqra_reduces_to_qra_bit_exactly(rng):
    fcs = {m: gaussian_forecast(rng.uniform(0, 100), rng.uniform(1, 10), levels=LEVELS) for m in "abc"}
    coeffs = QraCoefficients({"a": 0.3, "b": 0.9, "c": 0.0})
    zero = SqraShift({m: 0.0 for m in fcs})
    assert predict_sqra(coeffs, fcs, zero, LEVELS) == predict_qra(coeffs, fcs, LEVELS)


def test_sqra_translation_of_single_model():
    fc = gaussian_forecast(700.0, 10.0, levels=LEVELS)
    coeffs = QraCoefficients({"a": 1.0})
    out = predict_sqra(coeffs, {"a": fc}, SqraShift({"a": 200.0}), LEVELS)
    np.testing.assert_allclose(out.values, np.array(predict_qra(coeffs, {"a": fc}, LEVELS).values) - 200.0)


def test_sqra_corrects_a_jump(rng):
    # model tracks the truth in training, then jumps by D at delivery
    D, n = 300.0, 20
    mu = 1000 + np.cumsum(rng.normal(0, 5, n + 1))
    y = mu[:n] + rng.normal(0, 10, n)
    train = gaussian_series(mu[:n], 10.0)
    anchor = gaussian_forecast(mu[n], 10.0, target=day(n), levels=LEVELS)
    w = TrainingWindow("m", KEY, day(n), n, tuple(zip(train, y)), anchor)
    coeffs = fit_qra({"m": w}, LEVELS, PsoConfig(bounds=((0, 5),), seed=1))
    current = delivery("m", day(n), [gaussian_forecast(mu[n] + D, 10.0, target=day(n), levels=LEVELS)])
    fc = current.get(KEY, day(n))
    qra = predict_qra(coeffs, {"m": fc}, LEVELS)
    sqra = predict_sqra(coeffs, {"m": fc}, compute_sqra_shift(current, w), LEVELS)
    assert abs(sqra.median - mu[n]) < 0.1 * D
    assert qra.median - mu[n] == pytest.approx(coeffs.slopes["m"] * D, rel=0.1)


def test_negative_coefficients_rejected():
    with pytest.raises(ValueError):
        QraCoefficients({"a": -0.1})
    with pytest.raises(ValueError):
        EmosCoefficients({"a": 1.0}, c=-1.0, d=0.0)
    with pytest.raises(ValueError):
        SqraShift({"a": math.inf})
