"""Command-line entry point: ``estimate``, ``simulate`` and ``sweep``.

Exit codes: 0 success, 1 a requested check failed, 2 malformed input or
configuration, 3 rank-deficient design.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiment
from .estimators import KINDS, EstimatorSpec, estimate, plugin_variances
from .exceptions import ConfigurationError, RankDeficiencyError
from .model import RegressionData, simulate

EXIT_CHECK_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_RANK = 3


class InputError(Exception):
    pass


def read_data_csv(path: str | Path) -> RegressionData:
    """Read a ``y,x1..xm,w1..wk`` file; errors carry the offending line number."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: line 1: empty file")
        header = [h.strip() for h in header]
        xs = [h for h in header if re.fullmatch(r"x\d+", h)]
        ws = [h for h in header if re.fullmatch(r"w\d+", h)]
        m, k = len(xs), len(ws)
        expected = ["y"] + [f"x{j}" for j in range(1, m + 1)] + [f"w{j}" for j in range(1, k + 1)]
        if header != expected or m == 0 or k == 0:
            raise InputError(f"{path}: line 1: header must be y,x1..xm,w1..wk, got {','.join(header)}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError:
                raise InputError(f"{path}: line {line}: non-numeric entry") from None
            if not all(math.isfinite(v) for v in values):
                raise InputError(f"{path}: line {line}: non-finite entry")
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    a = np.array(rows)
    return RegressionData(a[:, 0], a[:, 1:1 + m], a[:, 1 + m:])


def write_data_csv(path: str | Path, data: RegressionData):
    """Write a dataset with shortest round-trip float formatting."""
    header = ["y"] + [f"x{j}" for j in range(1, data.m + 1)] + [f"w{j}" for j in range(1, data.k + 1)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.n):
            writer.writerow([repr(float(v)) for v in (data.y[i], *data.x[i], *data.w[i])])


def _spec_from_args(args, data: RegressionData) -> EstimatorSpec:
    kind = args.estimator
    if kind in ("shrink", "shrink-pp"):
        return EstimatorSpec(kind, p=args.p)
    if args.p is not None:
        raise ValueError(f"--p does not apply to {args.estimator}")
    if kind == "gbayes":
        if args.tau2 is None:
            raise ValueError("gbayes needs --tau2")
        sigma2, sigma_w = plugin_variances(data)
        return EstimatorSpec(kind, tau2=args.tau2,
                             sigma2=sigma2 if args.sigma2 is None else args.sigma2, sigma_w=sigma_w)
    return EstimatorSpec(kind)


def cmd_estimate(args) -> int:
    try:
        data = read_data_csv(args.input)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            spec = _spec_from_args(args, data)
            result = estimate(data, spec)
        except RankDeficiencyError as exc:
            print(f"error: rank-deficient design ({exc.block} block): {exc}", file=sys.stderr)
            return EXIT_RANK
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BAD_INPUT
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(result.to_json())
    return 0


def _load_experiment(args) -> experiment.ExperimentConfig:
    cfg = experiment.ExperimentConfig.load(args.config)
    d = cfg.to_dict()
    if getattr(args, "reps", None) is not None:
        d["reps"] = args.reps
    if getattr(args, "seed", None) is not None:
        d["dgp"]["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        d["out"] = args.out
    if getattr(args, "dump_data", None) is not None:
        d["dump_data"] = args.dump_data
    return experiment.ExperimentConfig.from_dict(d)


def cmd_simulate(args) -> int:
    try:
        cfg = _load_experiment(args)
    except ConfigurationError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report, checks = experiment.run_experiment(cfg)
    for note in report.warnings:
        print(f"warning: {note}", file=sys.stderr)
    (out / "report.csv").write_text(report.to_csv())
    doc = experiment.report_document(cfg, report, checks)
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    if cfg.dump_data:
        data_dir = out / "data"
        data_dir.mkdir(exist_ok=True)
        for r in range(cfg.dump_data):
            write_data_csv(data_dir / f"rep_{r}.csv", simulate(cfg.dgp, r))
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else EXIT_CHECK_FAILED


def cmd_sweep(args) -> int:
    try:
        cfg = _load_experiment(args)
        values = experiment.parse_values(args.values)
        # validate every point before spending time on any of them
        for v in values:
            experiment.config_for(cfg, args.axis, v)
    except ConfigurationError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    text = experiment.run_sweep(cfg, args.axis, values)
    path = out / f"sweep_{args.axis}.csv"
    path.write_text(text)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shrinkreg",
        description="Unbiased partial-shrinkage estimation of treatment effects in linear regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="fit one estimator to a CSV file and print JSON")
    est.add_argument("--input", required=True, help="CSV with header y,x1..xm,w1..wk")
    est.add_argument("--estimator", choices=KINDS, default="eb")
    est.add_argument("--p", type=float, default=None, help="shrinkage weight (shrink, shrink-pp)")
    est.add_argument("--tau2", type=float, default=None, help="prior scale (gbayes)")
    est.add_argument("--sigma2", type=float, default=None,
                     help="noise variance (gbayes); default is the long-regression estimate")
    est.set_defaults(func=cmd_estimate)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "run a Monte Carlo experiment and its checks"),
        ("sweep", cmd_sweep, "run an experiment over a grid of one parameter"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.set_defaults(func=func)
        if name == "simulate":
            p.add_argument("--dump-data", type=int, default=None, metavar="N",
                           help="also write the first N simulated datasets as CSV")
        else:
            p.add_argument("--axis", required=True, choices=experiment.SWEEP_AXES)
            p.add_argument("--values", required=True, help="comma-separated axis values")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
