"""Command-line interface: simulate, bench, fit, predict.

Options may also come from a JSON config file (``--config``) whose keys are
the long option names (dashes or underscores); explicit flags win.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dataset import DataError, load_csv, split_dataset
from .density import fit_cqrd, predict_intervals
from .quantile_regression import KNN, LINEAR, LearnerSpec
from .serialization import load_model, read_json, save_model
from .simulate import (RNG_ALGORITHM, BenchRow, compare_methods, run_replications, sample_sd,
                       interval_coverage)
from .utils import NumericalError

log = logging.getLogger("cqrd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str, n: Optional[int] = None) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _ordinal(text: str) -> tuple[str, tuple[str, ...]]:
    col, sep, levels = str(text).partition("=")
    if not sep or not col or not levels:
        raise argparse.ArgumentTypeError(f"expected COLUMN=LEVEL1,LEVEL2,..., got {text!r}")
    return col.strip(), tuple(v.strip() for v in levels.split(","))


def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="JSON file of option defaults")
    p.add_argument("--alpha", type=float, default=0.1, help="miscoverage level (default 0.1)")
    p.add_argument("--k", type=int, default=None, help="calibration neighbors (default ceil(sqrt(|cal|)))")
    p.add_argument("--lambda-bounds", type=lambda s: _floats(s, 2), default=(0.5, 1.5))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--learner", choices=(LINEAR, KNN), default=LINEAR)
    p.add_argument("--k-q", type=int, default=None, help="kNN learner neighbors (default ceil(sqrt(|train|)))")
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    if data:
        p.add_argument("--fractions", type=lambda s: _floats(s, 3), default=(0.6, 0.2, 0.2))
        p.add_argument("--response", default=None, help="response column name")
        p.add_argument("--ordinal", action="append", type=_ordinal, default=[],
                       metavar="COL=L1,L2,...", help="ordered levels of a categorical column (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cqrd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cqrd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="replicate CQR vs CQR-d on the synthetic benchmark")
    _common(p, data=False)
    p.add_argument("--sizes", type=_ints, default=(500, 1000, 2500))
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--output", default="simulate.csv", help="CSV path; run metadata goes to <stem>.json")

    p = sub.add_parser("bench", help="compare CQR and CQR-d on a labeled CSV")
    _common(p)
    p.add_argument("--input", required=False)
    p.add_argument("--reps", type=int, default=5, help="repeated random splits")
    p.add_argument("--output", default="bench.csv")

    p = sub.add_parser("fit", help="fit a CQR-d model and write it as JSON")
    _common(p)
    p.add_argument("--input", required=False)
    p.add_argument("--model-out", default="model.json")

    p = sub.add_parser("predict", help="prediction intervals from a saved model")
    p.add_argument("--config", help="JSON file of option defaults")
    p.add_argument("--model", required=False)
    p.add_argument("--input", required=False)
    p.add_argument("--output", default="intervals.csv")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = read_json(args.config)
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        defaults = {}
        for key, val in cfg.items():
            dest = key.replace("-", "_")
            if dest not in known or dest in ("config", "help"):
                raise UsageError(f"unknown config key {key!r} for command {args.command}")
            if dest == "ordinal" and isinstance(val, dict):
                val = [(c, tuple(lv)) for c, lv in val.items()]
            elif isinstance(val, list) and dest != "ordinal":
                val = tuple(val)
            defaults[dest] = val
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    _validate(args)
    return args


def _validate(args) -> None:
    if hasattr(args, "alpha") and not 0 < args.alpha < 1:
        raise UsageError(f"--alpha must lie in (0, 1), got {args.alpha}")
    if hasattr(args, "lambda_bounds"):
        lo, hi = args.lambda_bounds
        if not 0 < lo < 1 < hi:
            raise UsageError(f"--lambda-bounds must be positive and straddle 1, got {lo},{hi}")
    if hasattr(args, "fractions") and min(args.fractions) <= 0:
        raise UsageError("--fractions must be positive")
    if getattr(args, "k", None) is not None and args.k < 1:
        raise UsageError("--k must be at least 1")
    for name in ("reps", "epochs", "batch_size", "k_q"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be at least 1")
    if getattr(args, "learning_rate", 1) <= 0:
        raise UsageError("--learning-rate must be positive")
    if args.command in ("bench", "fit", "predict") and not args.input:
        raise UsageError("--input is required")
    if args.command in ("bench", "fit") and not args.response:
        raise UsageError("--response is required")
    if args.command == "predict" and not args.model:
        raise UsageError("--model is required")


def learner_from_args(args) -> LearnerSpec:
    if args.learner == LINEAR:
        hp = {"learning_rate": args.learning_rate, "epochs": args.epochs,
              "batch_size": args.batch_size, "seed": args.seed}
    else:
        hp = {"k_q": args.k_q}
    return LearnerSpec(args.learner, hp)


def _config_echo(args) -> dict:
    echo = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    if "ordinal" in echo:
        echo["ordinal"] = {c: list(lv) for c, lv in echo["ordinal"]}
    return json.loads(json.dumps(echo, default=list))


def _metadata(args, **extra) -> dict:
    meta = {"artifact": "cqrd", "artifact_version": __version__, "command": args.command,
            "config": _config_echo(args), "rng": RNG_ALGORITHM}
    meta.update(extra)
    return meta


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, allow_nan=True)
        fh.write("\n")


def _sidecar(path: str) -> str:
    return (path[:-4] if path.lower().endswith(".csv") else path) + ".json"


def _write_bench_csv(path, rows: Sequence[BenchRow], with_size: bool = True) -> None:
    cols = BenchRow.CSV_COLUMNS if with_size else BenchRow.CSV_COLUMNS[1:]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            vals = r.as_csv_row()
            w.writerow(vals if with_size else vals[1:])


def format_table(rows: Sequence[BenchRow], with_size: bool = True) -> str:
    head = f"{'Method':<7} {'Coverage Mean':>13} {'Coverage SD':>11} {'Width Mean':>12} {'Width SD':>10}"
    if with_size:
        head = f"{'n':>6} " + head
    lines = [head, "-" * len(head)]
    for r in rows:
        line = (f"{r.method:<7} {r.coverage_mean:>13.4f} {r.coverage_sd:>11.4f} "
                f"{r.width_mean:>12.4f} {r.width_sd:>10.4f}")
        lines.append((f"{r.sample_size:>6} " if with_size else "") + line)
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    learner = learner_from_args(args)
    rows, reps = run_replications(args.sizes, args.reps, args.alpha, learner, args.k, args.seed,
                                  tuple(args.lambda_bounds), details=True,
                                  progress=lambda r: log.info("n=%d seed=%d lambda*=%.4f", r.n, r.seed, r.lambda_star))
    _write_bench_csv(args.output, rows)
    _write_json(_sidecar(args.output), _metadata(
        args,
        seeds=sorted({r.seed for r in reps}),
        learner=learner.to_dict(),
        k=args.k if args.k is not None else "ceil(sqrt(|calibration|))",
        lambda_bounds=list(args.lambda_bounds),
        rows=[r.to_dict() for r in rows],
        replications=[{"n": r.n, "seed": r.seed, "cqr_coverage": r.cqr_coverage,
                       "cqr_width": r.cqr_width, "cqrd_coverage": r.cqrd_coverage,
                       "cqrd_width": r.cqrd_width, "lambda_star": r.lambda_star,
                       "epsilon_achieved": r.epsilon_achieved} for r in reps],
    ))
    print(format_table(rows))
    return EXIT_OK


def _load_labeled(args):
    return load_csv(args.input, args.response, dict(args.ordinal))


def cmd_bench(args) -> int:
    ds = _load_labeled(args)
    learner = learner_from_args(args)
    results = []
    for r in range(args.reps):
        splits = split_dataset(ds, args.fractions, args.seed + r)
        c_cov, c_w, d_cov, d_w, model = compare_methods(ds, splits, args.alpha, learner, args.k,
                                                        tuple(args.lambda_bounds))
        results.append((c_cov, c_w, d_cov, d_w, model.lambda_star))
        log.info("split %d: CQR %.4f/%.4f  CQR-d %.4f/%.4f", r, c_cov, c_w, d_cov, d_w)
    res = np.array(results)
    rows = [BenchRow(ds.n, "CQR-d", float(res[:, 2].mean()), sample_sd(res[:, 2]),
                     float(res[:, 3].mean()), sample_sd(res[:, 3]), args.reps),
            BenchRow(ds.n, "CQR", float(res[:, 0].mean()), sample_sd(res[:, 0]),
                     float(res[:, 1].mean()), sample_sd(res[:, 1]), args.reps)]
    _write_bench_csv(args.output, rows, with_size=False)
    _write_json(_sidecar(args.output), _metadata(
        args, n_rows=ds.n, learner=learner.to_dict(), split_seeds=[args.seed + r for r in range(args.reps)],
        rows=[r.to_dict() for r in rows],
        splits=[{"cqr_coverage": a, "cqr_width": b, "cqrd_coverage": c, "cqrd_width": d,
                 "lambda_star": e} for a, b, c, d, e in results]))
    print(format_table(rows, with_size=False))
    return EXIT_OK


def cmd_fit(args) -> int:
    ds = _load_labeled(args)
    splits = split_dataset(ds, args.fractions, args.seed)
    learner = learner_from_args(args)
    m = len(splits.calibration)
    if args.k is not None and args.k > m - 1:
        raise UsageError(f"k exceeds calibration size: k={args.k}, calibration has {m} rows")
    model = fit_cqrd(ds, splits, learner, args.alpha, args.k, tuple(args.lambda_bounds))
    batch = predict_intervals(model, ds.features[splits.test])
    y_test = ds.response[splits.test]
    save_model(model, args.model_out, _metadata(
        args, learner=learner.to_dict(), n_rows=ds.n, response=ds.response_name,
        split_sizes=[len(splits.train), m, len(splits.test)],
        test_coverage=interval_coverage(batch.lo, batch.hi, y_test),
        test_mean_width=float(np.mean(batch.width))))
    print(f"lambda*={model.lambda_star:.6f} epsilon={model.epsilon_achieved:.6f} k={model.k} "
          f"-> {args.model_out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    levels = {c.name: c.levels for c in model.columns if c.is_ordinal}
    ds = load_csv(args.input, None, levels, feature_columns=[c.name for c in model.columns])
    batch = predict_intervals(model, ds.features)
    batch.to_csv(args.output)
    _write_json(_sidecar(args.output), _metadata(
        args, model=args.model, n_rows=ds.n, lambda_star=model.lambda_star,
        repaired_intervals=batch.n_repaired))
    print(f"{len(batch)} intervals -> {args.output}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "bench": cmd_bench, "fit": cmd_fit, "predict": cmd_predict}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"cqrd: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"cqrd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"cqrd: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"cqrd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"cqrd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"cqrd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
