"""Command-line front end: score, combine, backtest and synth.

Exit codes: 0 success, 1 data error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from datetime import date
from pathlib import Path

from quantens.backtest import METHODS, METRIC_FIELDS, RunConfig, combine_series, combined_records, \
    current_deliveries, run_backtest
from quantens.core import DEFAULT_HORIZON, DEFAULT_LEVELS, DEFAULT_TRAIN_WINDOW, DataError, \
    emit_combined_csv, emit_forecast_csv, emit_observation_csv, parse_forecast_csv, parse_observation_csv
from quantens.distfit import FitError
from quantens.evaluation import EvaluationError
from quantens.pso import PsoError
from quantens.scoring import Interval, crps_from_quantiles, forecast_quantile_score_sum, interval_score
from quantens.synthetic import SyntheticConfigError, config_from_dict, generate_ensemble

logger = logging.getLogger("quantens")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2

SCORE_HEADER = ("model", "delivery_date", "region", "value_type", "target_date",
                "quantile_score_sum", "interval_score_50", "interval_score_90", "crps")

DEFAULT_SYNTH_CONFIG = {
    "days": 120,
    "start": "2021-01-04",
    "series": [
        {"region": "London", "value_type": "hospital_inc",
         "truth": {"kind": "logistic-wave", "growth_rate": 0.06, "peak": 1500.0, "baseline": 300.0,
                   "noise_sd": 25.0}},
        {"region": "North West", "value_type": "hospital_inc",
         "truth": {"kind": "noisy-random-walk", "growth_rate": 0.01, "baseline": 800.0, "noise_sd": 20.0}},
    ],
    "archetypes": [
        {"name": "calibrated"},
        {"name": "biased", "bias": 60.0, "spread": 0.8},
        {"name": "jumpy", "jump": {"date": "2021-03-05", "magnitude": 300.0, "series": ["North West|hospital_inc"]}},
        {"name": "late", "start": "2021-02-13", "skew": 2.0, "spread": 1.2},
    ],
}

DATA_ERRORS = (DataError, EvaluationError, SyntheticConfigError, FitError, PsoError, OSError, json.JSONDecodeError,
               UnicodeDecodeError, ValueError)


class UsageError(Exception):
    pass


def _levels(text: str):
    try:
        levels = tuple(sorted(float(v) for v in text.split(",") if v.strip()))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid quantile list {text!r}") from None
    if not levels or any(not 0.0 < a < 1.0 for a in levels) or len(set(levels)) != len(levels):
        raise argparse.ArgumentTypeError("quantiles must be distinct values in (0, 1)")
    return levels


def _methods(text: str):
    names = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in names if m not in METHODS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown method(s) {', '.join(bad) or '(none)'}; choose from {', '.join(METHODS)}")
    return tuple(dict.fromkeys(names))


def _positive(text: str):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def _decay(text: str):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError("lambda must lie in (0, 1]")
    return v


def _iso(text: str):
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid ISO date {text!r}") from None


def _add_run_flags(p):
    p.add_argument("--train-window", type=_positive, default=DEFAULT_TRAIN_WINDOW, help="training window T_p in days")
    p.add_argument("--horizon", type=_positive, default=DEFAULT_HORIZON, help="forecast horizon H in days")
    p.add_argument("--lambda", dest="decay", type=_decay, default=0.9, help="decay factor for stacking weights")
    p.add_argument("--quantiles", type=_levels, default=DEFAULT_LEVELS, help="comma-separated output levels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--include-incomplete", action="store_true",
                   help="let stacking use models whose training window is short")
    p.add_argument("--swarm-size", type=_positive, default=50, help=argparse.SUPPRESS)
    p.add_argument("--iterations", type=_positive, default=200, help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantens", description="Combine and evaluate quantile forecasts.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score individual forecasts against observations")
    p.add_argument("forecasts", type=Path)
    p.add_argument("observations", type=Path)
    p.add_argument("-o", "--out", type=Path, help="report CSV (default stdout)")

    p = sub.add_parser("combine", help="combine the latest deliveries")
    p.add_argument("forecasts", type=Path)
    p.add_argument("observations", type=Path)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--as-of", type=_iso, help="delivery date to combine (default latest)")
    p.add_argument("-o", "--out", type=Path, help="combined CSV (default stdout)")
    p.add_argument("--params-out", type=Path, help="JSON sidecar (default <out>.json when --out is given)")
    _add_run_flags(p)

    p = sub.add_parser("backtest", help="rolling-origin evaluation of combination methods")
    p.add_argument("forecasts", type=Path)
    p.add_argument("observations", type=Path)
    p.add_argument("--methods", type=_methods, default=METHODS, help="comma-separated method names")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--every", type=_positive, default=1, help="evaluate every n-th delivery date")
    _add_run_flags(p)

    p = sub.add_parser("synth", help="generate a synthetic ensemble")
    p.add_argument("--config", type=Path, help="JSON scenario (default built-in four-model scenario)")
    p.add_argument("--days", type=_positive)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=_positive, default=DEFAULT_HORIZON)
    p.add_argument("--train-window", type=_positive, default=DEFAULT_TRAIN_WINDOW)
    p.add_argument("--quantiles", type=_levels, default=DEFAULT_LEVELS)
    p.add_argument("--out-dir", type=Path, required=True)
    return parser


def _run_config(args) -> RunConfig:
    return RunConfig(train_window=args.train_window, horizon=args.horizon, decay=args.decay, levels=args.quantiles,
                     seed=args.seed, include_incomplete=args.include_incomplete, swarm_size=args.swarm_size,
                     iterations=args.iterations)


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None


def _load(args):
    try:
        deliveries = parse_forecast_csv(_read(args.forecasts))
    except DataError as exc:
        raise DataError(f"{args.forecasts}: {exc}") from None
    try:
        observations = parse_observation_csv(_read(args.observations))
    except DataError as exc:
        raise DataError(f"{args.observations}: {exc}") from None
    return deliveries, observations


def _write(path, data: bytes):
    if path is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def cmd_score(args) -> int:
    deliveries, observations = _load(args)
    obs = {s.key: s for s in observations}
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SCORE_HEADER)
    for dl in sorted(deliveries, key=lambda d: (d.model, d.delivery_date)):
        for (key, target) in sorted(dl.forecasts):
            series = obs.get(key)
            w = series.get(target) if series is not None else None
            if w is None or target < dl.delivery_date:
                continue
            fc = dl.forecasts[(key, target)]
            widths = []
            for lo, hi, alpha in ((0.25, 0.75, 0.5), (0.05, 0.95, 0.1)):
                if fc.has_level(lo) and fc.has_level(hi):
                    widths.append(repr(interval_score(Interval(fc.value_at(lo), fc.value_at(hi), alpha), w)))
                else:
                    widths.append("")
            writer.writerow([dl.model, dl.delivery_date.isoformat(), key.region, key.value_type, target.isoformat(),
                             repr(forecast_quantile_score_sum(fc, w)), *widths, repr(crps_from_quantiles(fc, w))])
    _write(args.out, out.getvalue().encode("utf-8"))
    return EXIT_OK


def cmd_combine(args) -> int:
    deliveries, observations = _load(args)
    if not deliveries:
        raise DataError(f"{args.forecasts}: no forecasts")
    config = _run_config(args)
    as_of = args.as_of or max(dl.delivery_date for dl in deliveries)
    current = current_deliveries(deliveries, as_of)
    if not current:
        raise DataError(f"no deliveries on {as_of}")
    obs = {s.key: s for s in observations}
    keys = sorted({k for dl in current.values() for k in dl.keys})
    forecasts, parameters = [], {}
    for key in keys:
        comb = combine_series(deliveries, obs.get(key), key, as_of, args.method, config)
        forecasts.extend(comb.forecasts)
        parameters[str(key)] = comb.parameters
    _write(args.out, emit_combined_csv(forecasts, args.method, as_of))
    sidecar = {"method": args.method, "seed": args.seed, "as_of": as_of.isoformat(),
               "config": config.as_dict(), "parameters": parameters}
    params_out = args.params_out or (args.out.with_name(args.out.name + ".json") if args.out else None)
    if params_out is not None:
        _write(params_out, _dump_json(sidecar))
    return EXIT_OK


def _rows_csv(rows, fields) -> bytes:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return out.getvalue().encode("utf-8")


def cmd_backtest(args) -> int:
    deliveries, observations = _load(args)
    config = _run_config(args)
    result = run_backtest(deliveries, observations, args.methods, config, every=args.every)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "per_delivery.csv").write_bytes(
        _rows_csv(result.rows, ("delivery_date", "series_key", "method", *METRIC_FIELDS)))
    (out / "per_series.csv").write_bytes(
        _rows_csv(result.series_rows, ("series_key", "method", "deliveries", *METRIC_FIELDS)))
    (out / "aggregate.csv").write_bytes(
        _rows_csv(result.aggregate_rows, ("value_type", "method", "series", *METRIC_FIELDS)))
    (out / "leaderboards.json").write_bytes(_dump_json(result.leaderboards))
    combined = io.StringIO()
    writer = csv.writer(combined, lineterminator="\n")
    writer.writerow(("method", "delivery_date", "region", "value_type", "target_date", "quantile", "value"))
    for as_of, method, fc in combined_records(result):
        for a, v in zip(fc.levels, fc.values):
            writer.writerow((method, as_of.isoformat(), fc.key.region, fc.key.value_type,
                             fc.target_date.isoformat(), repr(a), repr(v)))
    (out / "combined.csv").write_bytes(combined.getvalue().encode("utf-8"))
    (out / "run.json").write_bytes(_dump_json({
        "methods": list(args.methods), "seed": args.seed, "config": config.as_dict(),
        "delivery_dates": sorted({r["delivery_date"] for r in result.rows}), "skipped": result.skipped,
    }))
    for lb in result.leaderboards:
        if lb["delivery_date"] == "all":
            print(f"{lb['series_key']}: best {lb['best']} ({', '.join(lb['ranking'])})")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.config is not None:
        try:
            cfg = json.loads(_read(args.config).decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise SyntheticConfigError(f"{args.config}: invalid JSON: {exc}") from None
    else:
        cfg = DEFAULT_SYNTH_CONFIG
    truths, archetypes, options = config_from_dict(cfg)
    days = args.days or options.get("days", 120)
    kwargs = {"start": options["start"]} if "start" in options else {}
    data = generate_ensemble(truths, archetypes, days, args.horizon, args.quantiles, args.seed,
                             train_window=args.train_window, **kwargs)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "forecasts.csv").write_bytes(emit_forecast_csv(data.deliveries))
    (args.out_dir / "observations.csv").write_bytes(emit_observation_csv(data.observations))
    return EXIT_OK


COMMANDS = {"score": cmd_score, "combine": cmd_combine, "backtest": cmd_backtest, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
