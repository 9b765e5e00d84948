"""Command line interface.

Subcommands: ``run`` (execute an experiment config), ``plan`` (iteration and
batch sizing), ``verify`` (built-in acceptance suites), ``rates`` (power-law
fit on an emitted trace). Exit codes: 0 success, 1 any FAIL, 2 config or
usage error.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .core import ContractError
from .experiment import ConfigError, load_config, run_experiment
from .planner import plan
from .rates import estimate_rate
from .verify import SUITES, run_criterion, run_suite


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modelgrad")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config (JSON)")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="override output directory")

    p_plan = sub.add_parser("plan", help="choose N and batch size for a target accuracy")
    p_plan.add_argument("--eps", type=float, required=True)
    p_plan.add_argument("--L", type=float, required=True)
    p_plan.add_argument("--R", type=float, required=True)
    p_plan.add_argument("--sigma", type=float, required=True)
    p_plan.add_argument("--p", type=int, required=True, choices=(1, 2))

    p_verify = sub.add_parser("verify", help="run built-in acceptance checks")
    p_verify.add_argument("--suite", default="all", choices=sorted(SUITES))
    p_verify.add_argument("--criterion", default=None,
                          help="run a single named criterion instead of a suite")

    p_rates = sub.add_parser("rates", help="fit log(gap) vs log(k) on a trace csv")
    p_rates.add_argument("trace")
    p_rates.add_argument("--window", type=int, nargs=2, default=(20, 500),
                         metavar=("KMIN", "KMAX"))
    p_rates.add_argument("--column", default="f_gap",
                         choices=("f_gap", "f_gap_avg_point"))
    p_rates.add_argument("--seed", type=int, default=None,
                         help="which seed's rows to fit (default: first)")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    result = run_experiment(config, out_dir=args.out)
    print(f"wrote {result['csv']}")
    print(f"wrote {result['json']}")
    return 0


def _cmd_plan(args) -> int:
    out = plan(args.eps, args.L, args.R, args.sigma, args.p)
    print(f"N={out.N} r={out.r} calls={out.predicted_calls}")
    return 0


def _cmd_verify(args) -> int:
    if args.criterion is not None:
        results = [run_criterion(args.criterion)]
    else:
        results = run_suite(args.suite)
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 1


def _cmd_rates(args) -> int:
    with open(args.trace, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"empty trace file: {args.trace}")
    seeds = [int(r["seed"]) for r in rows]
    pick = args.seed if args.seed is not None else seeds[0]
    if pick not in seeds:
        raise ConfigError(f"seed {pick} not present in {args.trace}")
    series = [(int(r["k"]), float(r[args.column])) for r in rows
              if int(r["seed"]) == pick and int(r["k"]) >= 1]
    series.sort()
    gaps = np.array([g for _, g in series])
    fit = estimate_rate(gaps, tuple(args.window))
    print(f"slope={fit.slope:.6f} intercept={fit.intercept:.6f} "
          f"r_squared={fit.r_squared:.8f} window=[{fit.window[0]},{fit.window[1]}] "
          f"seed={pick} column={args.column}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    handlers = {"run": _cmd_run, "plan": _cmd_plan,
                "verify": _cmd_verify, "rates": _cmd_rates}
    try:
        return handlers[args.command](args)
    except (ConfigError, ContractError, KeyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
