"""Time each numerical kernel under the compiled and pure-Python backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

Each kernel runs on the same inputs under every importable backend. The
script reports the best-of-``repeat`` wall time per call, the speedup of the
compiled backend, and the largest absolute difference between backend outputs.
"""
import argparse
import csv
import sys
import timeit

import numpy as np

from quantens.kernels import backends


def workloads(rng):
    """Return ``{name: (callable(backend) -> result, calls per timing)}``."""
    levels = np.array([0.05, 0.125, 0.25, 0.5, 0.75, 0.875, 0.95])
    targets = 100.0 + 15.0 * np.array([-1.9, -1.2, -0.7, 0.0, 0.6, 1.1, 1.8])
    sn_params = np.column_stack([rng.normal(100, 5, 50), rng.uniform(5, 30, 50), rng.uniform(-5, 5, 50)])

    days, k = 60, 4
    medians = rng.normal(500, 50, (days, k))
    spread = medians.std(axis=1)
    obs = medians.mean(axis=1) + rng.normal(0, 10, days)
    emos_params = np.column_stack([rng.normal(0, 5, 50), rng.uniform(0, 0.5, (50, k)), rng.uniform(0, 50, (50, 2))])
    quantiles = medians[:, None, :] + 20.0 * np.array([-1.6, -1.2, -0.7, 0.0, 0.7, 1.2, 1.6])[None, :, None]
    qra_params = rng.uniform(0, 0.5, (50, k))

    samples = rng.normal(size=2000)
    comp_levels = np.tile(levels, (k, 1))
    comp_values = np.sort(rng.normal(500, 60, (k, levels.size)), axis=1)
    ones = np.full(k, 10.0)
    weights = np.full(k, 1.0 / k)
    grid = np.linspace(250, 750, 500)
    points = rng.normal(0, 2, 200)

    return {
        "owens_t": (lambda b: [b.owens_t(h, 0.5 + abs(h)) for h in points], 5),
        "skewnorm_cdf": (lambda b: [b.skewnorm_cdf(z, 3.0) for z in points], 5),
        "skewnorm_ppf": (lambda b: [b.skewnorm_ppf(a, -2.0) for a in np.linspace(0.01, 0.99, 50)], 1),
        "skewnorm_sse_batch": (lambda b: b.skewnorm_sse_batch(sn_params, levels, targets), 1),
        "crps_gaussian": (lambda b: [b.crps_gaussian(0.0, 1.0, w) for w in points], 20),
        "emos_objective_batch": (lambda b: b.emos_objective_batch(emos_params, medians, spread, obs, 1e-6), 20),
        "qra_objective_batch": (lambda b: b.qra_objective_batch(qra_params, quantiles, obs, levels), 20),
        "pair_abs_sum": (lambda b: b.pair_abs_sum(samples), 1),
        "pl_mixture_cdf": (lambda b: b.pl_mixture_cdf(grid, comp_levels, comp_values, ones, ones, weights), 20),
    }


def run(repeat, seed=0):
    found = backends()
    rows = []
    for name, (fn, number) in workloads(np.random.default_rng(seed)).items():
        row = {"kernel": name}
        outputs = {}
        for label, module in found.items():
            outputs[label] = np.asarray(fn(module), dtype=float)
            best = min(timeit.repeat(lambda: fn(module), number=number, repeat=repeat)) / number
            row[f"{label}_ms"] = 1e3 * best
        if "cython" in found:
            row["speedup"] = row["python_ms"] / row["cython_ms"]
            row["max_abs_diff"] = float(np.max(np.abs(outputs["python"] - outputs["cython"])))
        rows.append(row)
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timing repeats; the best is reported")
    parser.add_argument("--csv", help="also write the table to this CSV file")
    args = parser.parse_args(argv)

    rows = run(args.repeat)
    if "cython_ms" not in rows[0]:
        print("compiled backend not built; run `python3 setup.py build_ext --inplace`", file=sys.stderr)
    fields = list(rows[0])
    print(f"{'kernel':<22}" + "".join(f"{f:>14}" for f in fields[1:]))
    for row in rows:
        print(f"{row['kernel']:<22}" + "".join(f"{row[f]:>14.4g}" for f in fields[1:]))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
