import numpy as np
import pytest

from quantens.pso import PsoConfig, PsoError, minimize, upper_cap


def test_finds_interior_minimum():
    cfg = PsoConfig(bounds=((0, 10), (0, 10)), seed=3)
    res = minimize(lambda x: (x[0] - 1) ** 2 + (x[1] - 2) ** 2, cfg)
    np.testing.assert_allclose(res.best_position, [1.0, 2.0], atol=1e-3)
    assert res.trace.shape == (cfg.iterations + 1,)
    assert np.all(np.diff(res.trace) <= 0)


def test_boundary_minimum_is_clipped():
    res = minimize(lambda x: (x[0] + 1) ** 2, PsoConfig(bounds=((0, 10),), seed=1))
    assert res.best_position[0] == 0.0


def test_same_seed_is_bit_identical_and_vectorized_equivalent():
    cfg = PsoConfig(bounds=((-5, 5), (-5, 5), (-5, 5)), seed=11, iterations=50)

    def f(x):
        return float(np.sum(np.sin(3 * x) + x * x))

    a, b = minimize(f, cfg), minimize(f, cfg)
    assert a.best_position.tobytes() == b.best_position.tobytes()
    assert a.best_value == b.best_value
    v = minimize(lambda X: np.sum(np.sin(3 * X) + X * X, axis=1), cfg, vectorized=True)
    assert v.best_position.tobytes() == a.best_position.tobytes()


def test_seeded_positions_bound_the_result():
    cfg = PsoConfig(bounds=((0, 1),), swarm_size=2, iterations=1, seed=0, initial_positions=((0.25,),))
    res = minimize(lambda x: abs(x[0] - 0.25), cfg)
    assert res.best_value == 0.0


def test_nonfinite_initial_samples_are_redrawn():
    calls = []

    def f(x):
        calls.append(1)
        return np.inf if len(calls) <= 3 else float(x[0] ** 2)

    res = minimize(f, PsoConfig(bounds=((-1, 1),), swarm_size=5, iterations=5))
    assert np.isfinite(res.best_value)
    with pytest.raises(PsoError):
        minimize(lambda x: np.nan, PsoConfig(bounds=((-1, 1),), swarm_size=3, iterations=2))


@pytest.mark.parametrize("kwargs", [dict(bounds=()), dict(bounds=((1, 0),)), dict(bounds=((0, 1),), swarm_size=1),
                                    dict(bounds=((0, 1),), iterations=0), dict(bounds=((0, np.inf),))])
def test_invalid_configs(kwargs):
    with pytest.raises(ValueError):
        PsoConfig(**kwargs)


def test_upper_cap():
    assert upper_cap([1, -30, 2]) == 300.0
    assert upper_cap([]) == 10.0
