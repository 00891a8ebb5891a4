"""Bound-constrained global-best particle swarm minimizer."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

MAX_INIT_RETRIES = 100


class PsoError(RuntimeError):
    pass


@dataclass(frozen=True)
class PsoConfig:
    """Swarm hyperparameters and the search box.

    ``bounds`` is a sequence of ``(low, high)`` pairs, one per dimension.
    ``initial_positions`` optionally seeds the first particles (clipped to
    the box), which lets callers guarantee a known baseline is never beaten.
    """

    bounds: tuple
    swarm_size: int = 50
    iterations: int = 200
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    seed: int = 0
    initial_positions: tuple = field(default=(), compare=False)

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be at least 2")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not bounds:
            raise ValueError("bounds must have at least one dimension")
        for lo, hi in bounds:
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ValueError(f"invalid bounds ({lo}, {hi})")

    def with_bounds(self, bounds, initial_positions=()):
        return PsoConfig(
            bounds=tuple(bounds),
            swarm_size=self.swarm_size,
            iterations=self.iterations,
            inertia=self.inertia,
            cognitive=self.cognitive,
            social=self.social,
            seed=self.seed,
            initial_positions=tuple(tuple(p) for p in initial_positions),
        )

    def with_seed(self, seed):
        return PsoConfig(
            bounds=self.bounds,
            swarm_size=self.swarm_size,
            iterations=self.iterations,
            inertia=self.inertia,
            cognitive=self.cognitive,
            social=self.social,
            seed=seed,
            initial_positions=self.initial_positions,
        )


@dataclass(frozen=True)
class PsoResult:
    best_position: np.ndarray
    best_value: float
    trace: np.ndarray


def upper_cap(data, factor=10.0):
    """Default upper bound for dimensions without a natural cap."""
    data = np.asarray(data, dtype=float)
    return factor * max(float(np.abs(data).max()) if data.size else 1.0, 1.0)


def _evaluate(objective, x, vectorized):
    if vectorized:
        y = np.asarray(objective(x), dtype=float).reshape(-1)
    else:
        y = np.array([objective(row) for row in x], dtype=float)
    return np.where(np.isfinite(y), y, np.inf)


def minimize(objective, config: PsoConfig, vectorized: bool = False) -> PsoResult:
    """Minimize ``objective`` over the box in ``config``.

    With ``vectorized=True`` the objective receives the whole swarm as an
    ``(n, dim)`` array and returns ``n`` values; the random stream and
    therefore the result are the same as for the per-particle form.
    """
    rng = np.random.default_rng(config.seed)
    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    span = hi - lo
    n, dim = config.swarm_size, lo.size

    x = lo + rng.random((n, dim)) * span
    seeds = np.asarray(config.initial_positions, dtype=float).reshape(-1, dim) if config.initial_positions else None
    if seeds is not None:
        k = min(len(seeds), n)
        x[:k] = np.clip(seeds[:k], lo, hi)
    y = _evaluate(objective, x, vectorized)
    for _ in range(MAX_INIT_RETRIES):
        bad = ~np.isfinite(y)
        if not bad.any():
            break
        x[bad] = lo + rng.random((int(bad.sum()), dim)) * span
        y[bad] = _evaluate(objective, x[bad], vectorized)
    else:
        if not np.isfinite(y).all():
            raise PsoError("objective is non-finite at the initial samples after retries")

    v = np.zeros((n, dim))
    pbest_x, pbest_y = x.copy(), y.copy()
    g = int(np.argmin(pbest_y))
    gbest_x, gbest_y = pbest_x[g].copy(), float(pbest_y[g])
    trace = [gbest_y]

    for _ in range(config.iterations):
        r1 = rng.random((n, dim))
        r2 = rng.random((n, dim))
        v = (config.inertia * v
             + config.cognitive * r1 * (pbest_x - x)
             + config.social * r2 * (gbest_x - x))
        np.clip(v, -span, span, out=v)
        x = x + v
        clamped = (x < lo) | (x > hi)
        x = np.clip(x, lo, hi)
        v[clamped] = 0.0
        y = _evaluate(objective, x, vectorized)
        better = y < pbest_y
        pbest_x[better] = x[better]
        pbest_y[better] = y[better]
        g = int(np.argmin(pbest_y))
        if pbest_y[g] < gbest_y:
            gbest_x, gbest_y = pbest_x[g].copy(), float(pbest_y[g])
        trace.append(gbest_y)

    return PsoResult(gbest_x, gbest_y, np.asarray(trace))
