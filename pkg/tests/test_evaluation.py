import csv
import io
import json
import math

import pytest
from hypothesis import given, strategies as st

from quantens.core import QuantileForecast
from quantens.evaluation import (
    EvaluationError,
    EvaluationMetrics,
    REPORT_FIELDS,
    bar_height,
    bias,
    calibration,
    evaluate,
    leaderboard_json,
    mean_interval_score,
    rank,
    report_csv,
    report_rows,
    select_best,
    sharpness,
)

from conftest import KEY, day, gaussian_forecast, series

SEVEN = (0.05, 0.125, 0.25, 0.5, 0.75, 0.875, 0.95)


def point(v, i=0):
    return QuantileForecast(KEY, day(i), SEVEN, (v,) * 7)


def metrics(distance_b=0.0, sharp=1.0):
    # bias chosen so b_hat = distance_b and calibration 0.5 so c_hat = 0
    return EvaluationMetrics(sharpness=sharp, bias=0.5 - 0.5 * distance_b, calibration=0.5, mean_interval_score=1.0)


def test_perfect_forecast_sits_at_origin():
    data = [3.0, 7.0, 11.0]
    fcs = [point(v, i) for i, v in enumerate(data)]
    (m,) = evaluate({"perfect": fcs}, series(data)).values()
    assert (m.b_hat, m.c_hat, m.sharpness, m.mean_interval_score, m.distance) == (0.0, 0.0, 0.0, 0.0, 0.0)


def test_sharpness_examples():
    assert sharpness([point(1.0)]) == 0.0
    fcs = [QuantileForecast(KEY, day(i), (0.125, 0.875), (0.0, w)) for i, w in enumerate((4.0, 6.0, 8.0))]
    assert sharpness(fcs) == 6.0
    assert sharpness([QuantileForecast(KEY, day(0), (0.125, 0.875), (2.0, 10.0))] * 3) == 8.0


def test_bias_examples():
    fcs = [point(10.0, i) for i in range(4)]
    assert bias(fcs, [1.0] * 4) == 1.0
    assert bias(fcs, [10.0] * 4) == 0.5
    assert bias(fcs, [1.0, 20.0, 2.0, 30.0]) == 0.5


def test_calibration_examples():
    wide = [QuantileForecast(KEY, day(i), (0.125, 0.5, 0.875), (0.0, 5.0, 10.0)) for i in range(3)]
    assert calibration(wide, [5.0] * 3) == 1.0
    assert calibration(wide, [20.0] * 3) == 0.0
    assert calibration([point(4.0)], [4.0]) == 0.5
    assert calibration(wide, [0.0, 5.0, 11.0]) == pytest.approx(0.5)


def test_mean_interval_score_example():
    fc = QuantileForecast(KEY, day(0), (0.05, 0.25, 0.5, 0.75, 0.95), (0.0, 10.0, 15.0, 20.0, 30.0))
    assert mean_interval_score([fc], [15.0]) == pytest.approx(40.0 / 3.0)
    assert mean_interval_score([point(2.0)], [2.0]) == 0.0


@given(st.floats(0.1, 100), st.floats(-50, 50), st.floats(0.1, 20), st.floats(-100, 100))
def test_mean_interval_score_is_positively_homogeneous(c, mu, sd, w):
    fc = gaussian_forecast(mu, sd, levels=SEVEN)
    scaled = QuantileForecast(KEY, day(0), SEVEN, tuple(c * v for v in fc.values))
    assert mean_interval_score([scaled], [c * w]) == pytest.approx(c * mean_interval_score([fc], [w]), rel=1e-9)


def test_missing_levels_are_completed():
    five = gaussian_forecast(0.0, 1.0, levels=(0.05, 0.25, 0.5, 0.75, 0.95))
    assert sharpness([five]) == pytest.approx(2 * 1.1503, rel=0.02)


def test_evaluate_identical_methods_and_insertion_order():
    fcs = [gaussian_forecast(float(i), 2.0, target=day(i)) for i in range(5)]
    obs = series([0.5, 1.0, 2.5, 2.0, 5.5])
    a = evaluate({"x": fcs, "y": fcs}, obs)
    b = evaluate({"y": fcs, "x": fcs}, obs)
    assert a["x"] == a["y"]
    assert list(a) == list(b) and a == b


def test_evaluate_rejects_misaligned_dates():
    obs = series(range(5))
    with pytest.raises(EvaluationError, match="different target dates"):
        evaluate({"a": [point(0.0, 0), point(1.0, 1)], "b": [point(0.0, 0)]}, obs)
    with pytest.raises(EvaluationError):
        bias([point(0.0)], [1.0, 2.0])


def test_select_best_rules():
    assert select_best({"a": metrics(0.2), "b": metrics(0.9)}) == "a"
    assert select_best({"a": metrics(0.2, sharp=5.0), "b": metrics(0.2, sharp=3.0)}) == "b"
    assert select_best({"b": metrics(0.2), "a": metrics(0.2)}) == "a"
    assert select_best([("b", metrics(0.1)), ("a", metrics(0.3))]) == "b"
    with pytest.raises(EvaluationError):
        select_best({})


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 10)), min_size=1, max_size=6), st.randoms())
def test_select_best_is_permutation_invariant(specs, random):
    board = [(f"m{i}", metrics(d, s)) for i, (d, s) in enumerate(specs)]
    expected = select_best(board)
    random.shuffle(board)
    assert select_best(board) == expected
    assert rank(dict(board))[0][0] == expected


@pytest.mark.parametrize("b, c, expected", [(0.0, 0.0, 1.41421), (1.0, 1.0, 0.0), (0.8, 0.0, 0.61421)])
def test_bar_height(b, c, expected):
    m = EvaluationMetrics(sharpness=1.0, bias=0.5 - 0.5 * b, calibration=0.5 - 0.5 * c, mean_interval_score=0.0)
    assert bar_height(m) == pytest.approx(expected, abs=1e-5)
    assert bar_height(m) == pytest.approx(math.sqrt(2) - math.hypot(b, c))


def test_report_and_leaderboard_shapes():
    board = {"good": metrics(0.1), "bad": metrics(0.7)}
    rows = report_rows(KEY, board)
    assert [r["method"] for r in rows] == ["good", "bad"]
    parsed = list(csv.DictReader(io.StringIO(report_csv(rows).decode())))
    assert tuple(parsed[0]) == REPORT_FIELDS
    assert float(parsed[0]["distance"]) == pytest.approx(0.1)
    lb = json.loads(json.dumps(leaderboard_json(KEY, board)))
    assert lb["best"] == "good" and lb["series_key"] == "London|hospital_inc"
    assert set(lb["ranking"][0]) >= set(REPORT_FIELDS[1:])
