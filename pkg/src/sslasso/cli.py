"""Command-line front end.

Subcommands::

    sslasso fit        --input data.csv            coefficients.csv, summary.json
    sslasso paths      --input data.csv            path.csv
    sslasso intervals  --input data.csv            intervals.csv
    sslasso simulate   --preset sec33 --seed 1     data.csv, truth.json
    sslasso benchmark  --preset table1 --seed 1    benchmark.json, benchmark.csv

Predictor indices in every output file are 1-based. Exit status is 0 on
success, 1 on a numerical failure and 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .benchmark import PRESETS, preset, replication_seed, run_benchmark, simulate
from .data import destandardize, load_dataset, standardize
from .em import em_fit
from .exceptions import DataError, NumericalError
from .inference import confidence_intervals, debias, precision_estimate, write_intervals_csv
from .penalty import SSLHyperParams
from .solver import fit_path

__all__ = ["main", "build_parser", "parse_ladder"]

OUTPUT_ENV = "SSLASSO_OUTPUT_DIR"
EXIT_NUMERIC = 1
EXIT_INPUT = 2

logger = logging.getLogger("sslasso")


def parse_ladder(spec: str) -> tuple[float, ...]:
    """``"min:max:count"`` to ``count`` linearly spaced spike rates."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"ladder must look like min:max:count, got {spec!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse ladder {spec!r}") from None
    if count < 1 or lo <= 0:
        raise argparse.ArgumentTypeError(f"ladder needs count >= 1 and min > 0, got {spec!r}")
    if (count == 1) != (lo == hi) or hi < lo:
        raise argparse.ArgumentTypeError(
            f"ladder {spec!r}: use min < max with count > 1, or min == max with count 1"
        )
    return tuple(float(v) for v in np.linspace(lo, hi, count))


def _sigma2_init(text: str):
    if text in ("cv", "null"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sigma2 init must be cv, null or a number, got {text!r}") from None


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("prior and solver")
    g.add_argument("--lambda1", type=float, help="slab rate (default 1)")
    g.add_argument("--lambda0", type=parse_ladder, metavar="MIN:MAX:COUNT",
                   help="spike-rate ladder (default 50 rungs from lambda1+1 to max(n, 100))")
    g.add_argument("--a", type=float, help="beta prior shape a (default 1)")
    g.add_argument("--b", type=float, help="beta prior shape b (default p)")
    g.add_argument("--sigma2", type=float, help="fix the error variance (default: estimate it)")
    g.add_argument("--sigma2-init", type=_sigma2_init,
                   help="starting variance when estimated: cv, null or a number (default cv)")
    g.add_argument("--theta", type=float, help="fix the mixing weight instead of estimating it")
    g.add_argument("--tol", type=float, help="convergence tolerance (default 1e-6)")
    g.add_argument("--max-iter", type=int, help="iterations per rung (default 500)")
    g.add_argument("--solver", choices=("ca", "em"), default="ca")


def _add_output_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", type=Path,
                   help=f"output directory (default ${OUTPUT_ENV} or the current directory)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sslasso", description="Spike-and-slab LASSO regression.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("fit", "fit the model and write coefficients and a summary"),
        ("paths", "write coefficient paths along the ladder"),
        ("intervals", "write debiased confidence intervals"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--input", type=Path, required=True, help="CSV with response column y first")
        _add_output_flag(p)
        _add_hyper_flags(p)
        if name == "intervals":
            p.add_argument("--alpha", type=float, default=0.05)
            p.add_argument("--precision", choices=("nodewise", "exact"), default="nodewise")
            p.add_argument("--nodewise-lambda", type=float,
                           help="nodewise LASSO rate (default sqrt(log p / n))")

    for name, help_text in (
        ("simulate", "write one simulated dataset and its truth"),
        ("benchmark", "run replicated simulations and write aggregate reports"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--preset", choices=sorted(PRESETS), required=True)
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--n", type=int, help="override the preset sample size")
        _add_output_flag(p)
        if name == "simulate":
            p.add_argument("--replication", type=int, default=1,
                           help="which benchmark replication to reproduce (1-based, default 1)")
        else:
            p.add_argument("--replications", type=int, help="override the preset count")
            p.add_argument("--workers", type=int, default=1)
            p.add_argument("--no-baseline", action="store_true", help="skip the LASSO baseline")
            _add_hyper_flags(p)
    return parser


def _hyper(args, base: SSLHyperParams) -> SSLHyperParams:
    overrides = {
        "lambda1": args.lambda1,
        "lambda0_ladder": args.lambda0,
        "a": args.a,
        "b": args.b,
        "sigma2": args.sigma2,
        "sigma2_init": args.sigma2_init,
        "fixed_theta": args.theta,
        "tol": args.tol,
        "max_iter": args.max_iter,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "lambda1" in overrides and "lambda0_ladder" not in overrides:
        # a preset ladder may sit below a new slab rate; fall back to the default
        overrides["lambda0_ladder"] = None
    return replace(base, **overrides)


def _outdir(args) -> Path:
    out = args.output or Path(os.environ.get(OUTPUT_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit(args):
    raw = load_dataset(args.input)
    design = standardize(raw)
    hyper = _hyper(args, SSLHyperParams()).resolved(design.n, design.p)
    path = (em_fit if args.solver == "em" else fit_path)(design, hyper)
    return raw, design, hyper, path


def _config_echo(args, hyper: SSLHyperParams) -> dict:
    echo = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
            if k not in ("lambda0", "func")}
    echo["hyper"] = asdict(hyper)
    return echo


def _rung(index):
    return None if index is None else index + 1


def cmd_fit(args) -> int:
    raw, design, hyper, path = _fit(args)
    out = _outdir(args)
    final = path.final
    beta_raw, intercept = destandardize(final.beta, design)
    with (out / "coefficients.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "name", "beta_raw", "beta_std", "selected"])
        for j, name in enumerate(design.column_names):
            w.writerow([j + 1, name, float(beta_raw[j]), float(final.beta[j]), int(final.beta[j] != 0)])
    summary = {
        "n": design.n,
        "p": design.p,
        "theta": final.theta,
        "sigma2": final.sigma2,
        "sigma2_floored": final.sigma2_floored,
        "support": [int(j) + 1 for j in final.support],
        "support_names": [design.column_names[j] for j in final.support],
        "intercept": intercept,
        "final_lambda0": path.rungs[-1][0],
        "iterations": [st.iterations for _, st in path.rungs],
        "converged": [st.converged for _, st in path.rungs],
        "stabilized_at": _rung(path.stabilized_at),
        "sigma2_unfrozen_at": _rung(path.sigma2_unfrozen_at),
        "log_posterior": final.log_posterior,
        "config": _config_echo(args, hyper),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return 0


def cmd_paths(args) -> int:
    _, design, _, path = _fit(args)
    out = _outdir(args)
    with (out / "path.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["rung", "lambda0", "index", "name", "beta_std"])
        for s, (lam0, st) in enumerate(path.rungs, start=1):
            for j, name in enumerate(design.column_names):
                w.writerow([s, lam0, j + 1, name, float(st.beta[j])])
    return 0


def cmd_intervals(args) -> int:
    if not 0 < args.alpha < 1:
        raise DataError(f"alpha must lie in (0, 1), got {args.alpha}")
    _, design, _, path = _fit(args)
    method = "exact_inverse" if args.precision == "exact" else "nodewise"
    prec = precision_estimate(design, method, args.nodewise_lambda)
    final = path.final
    table = confidence_intervals(debias(final.beta, prec, design), prec, design, final.sigma2, args.alpha)
    out = _outdir(args)
    write_intervals_csv(out / "intervals.csv", table, design.column_names, prec)
    return 0


def _sim_config(args):
    overrides = {"seed": args.seed}
    if args.n is not None:
        overrides["n"] = args.n
    if getattr(args, "replications", None) is not None:
        overrides["replications"] = args.replications
    return preset(args.preset, **overrides)


def cmd_simulate(args) -> int:
    config, _ = _sim_config(args)
    if args.replication < 1:
        raise DataError(f"replication must be at least 1, got {args.replication}")
    seed = replication_seed(config.seed, args.replication - 1)
    raw = simulate(config, np.random.default_rng(seed))
    out = _outdir(args)
    with (out / "data.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["y", *raw.column_names])
        for i in range(raw.n):
            w.writerow([float(raw.y[i]), *raw.X[i].tolist()])
    truth = {
        "preset": args.preset,
        "master_seed": config.seed,
        "replication": args.replication,
        "replication_seed": seed,
        "config": asdict(config),
        "support": sorted(config.truth),
        "beta": config.beta0.tolist(),
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    return 0


def cmd_benchmark(args) -> int:
    if args.workers < 1:
        raise DataError(f"workers must be at least 1, got {args.workers}")
    config, base = _sim_config(args)
    hyper = _hyper(args, base).resolved(config.n, config.p)
    out = _outdir(args)
    report = run_benchmark(config, args.solver, hyper, workers=args.workers,
                           baseline=not args.no_baseline)
    report.write(out)
    if report.failures:
        logger.warning("%d replications failed; see benchmark.json", len(report.failures))
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "paths": cmd_paths,
    "intervals": cmd_intervals,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"sslasso: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, OSError) as exc:
        print(f"sslasso: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
