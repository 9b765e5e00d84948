"""Experiment runner: seeded solver sweeps, CSV traces, JSON aggregates.

Config files are JSON with a strict schema (unknown keys are hard errors,
since a silent typo corrupts an experiment). Output is deterministic for a
given config: fixed column order, rows sorted by (seed, k), floats printed
with 17 significant digits, JSON keys sorted. Seeds may be processed by a
pool of workers (MODELGRAD_WORKERS); aggregation sorts by seed, so results
do not depend on completion order.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import ContractError, Trace
from .oracle import NoiseSpec
from .problems import PROBLEM_FAMILIES, ProblemInstance, build_instance
from .rates import estimate_rate
from .solver import run_fgm, run_gm, run_sgd_small_step

WORKERS_ENV = "MODELGRAD_WORKERS"

CSV_COLUMNS = ("k", "f_gap", "f_gap_avg_point", "A_k", "alpha_k", "oracle_calls", "seed")

_MODEL_FOR_FAMILY = {
    "quadratic": "linear",
    "least_squares": "linear",
    "lasso": "composite",
    "max_quadratics": "max_smooth",
}

_SCHEMA = {
    "problem": {
        "family", "n", "seed", "L", "mu", "R", "rows", "l1", "m", "ref_iters", "Q",
    },
    "model": {"family", "noise", "batch", "double_l"},
    "solver": {"method", "N", "h"},
}
_TOP_KEYS = {"problem", "model", "solver", "seeds", "output", "rates"}
_NOISE_KEYS = {"kind", "sigma"}
_OUTPUT_KEYS = {"dir"}
_RATES_KEYS = {"window", "column"}


class ConfigError(ValueError):
    """Malformed experiment config; message carries the offending path."""


@dataclass
class ExperimentConfig:
    raw: dict
    problem: dict
    model: dict
    solver: dict
    seeds: list[int]
    out_dir: Optional[str]
    rates: Optional[dict]


def _require_keys(block: dict, allowed: set, path: str) -> None:
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown key {path}.{key!r}")


def validate_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _require_keys(raw, _TOP_KEYS, "$")
    for block in ("problem", "model", "solver", "seeds"):
        if block not in raw:
            raise ConfigError(f"missing required section {block!r}")

    problem = raw["problem"]
    _require_keys(problem, _SCHEMA["problem"], "$.problem")
    family = problem.get("family")
    if family not in PROBLEM_FAMILIES:
        raise ConfigError(f"$.problem.family must be one of {PROBLEM_FAMILIES}")

    model = raw["model"]
    _require_keys(model, _SCHEMA["model"], "$.model")
    expected_model = _MODEL_FOR_FAMILY[family]
    if model.get("family", expected_model) != expected_model:
        raise ConfigError(
            f"$.model.family must be {expected_model!r} for {family} problems")
    noise = model.get("noise", {"kind": "none"})
    _require_keys(noise, _NOISE_KEYS, "$.model.noise")
    if int(model.get("batch", 1)) < 1:
        raise ConfigError("$.model.batch must be >= 1")

    solver = raw["solver"]
    _require_keys(solver, _SCHEMA["solver"], "$.solver")
    method = solver.get("method")
    if method not in ("gm", "fgm", "sgd"):
        raise ConfigError("$.solver.method must be gm, fgm, or sgd")
    if int(solver.get("N", 0)) < 1:
        raise ConfigError("$.solver.N must be >= 1")
    if method == "sgd":
        if "h" not in solver:
            raise ConfigError("$.solver.h is required for sgd")
        if family not in ("quadratic", "least_squares"):
            raise ConfigError("sgd requires a smooth problem family")

    seeds = raw["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("$.seeds must be a nonempty list of integers")
    seeds = [int(s) for s in seeds]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("$.seeds must not repeat")

    out_dir = None
    if "output" in raw:
        _require_keys(raw["output"], _OUTPUT_KEYS, "$.output")
        out_dir = raw["output"].get("dir")

    rates = raw.get("rates")
    if rates is not None:
        _require_keys(rates, _RATES_KEYS, "$.rates")

    return ExperimentConfig(raw=raw, problem=problem, model=model, solver=solver,
                            seeds=seeds, out_dir=out_dir, rates=rates)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {p}: {exc}") from exc
    return validate_config(raw)


def _noise_for_seed(model_cfg: dict, seed: int) -> NoiseSpec:
    return NoiseSpec.from_dict(model_cfg.get("noise", {"kind": "none"}), seed=seed)


def _run_single(cfg: ExperimentConfig, instance: ProblemInstance, seed: int) -> Trace:
    noise = _noise_for_seed(cfg.model, seed)
    method = cfg.solver["method"]
    N = int(cfg.solver["N"])
    if method == "sgd":
        oracle = instance.make_oracle(noise)
        return run_sgd_small_step(instance.problem, oracle, float(cfg.solver["h"]),
                                  instance.x0, N, store_points=False)
    model = instance.make_model(noise, batch=int(cfg.model.get("batch", 1)),
                                double_l=bool(cfg.model.get("double_l", True)))
    runner = run_gm if method == "gm" else run_fgm
    return runner(instance.problem, model, instance.x0, N, store_points=False)


def _worker(raw_config: dict, seed: int) -> tuple[int, list, dict]:
    cfg = validate_config(raw_config)
    instance = build_instance(cfg.problem)
    trace = _run_single(cfg, instance, seed)
    return seed, _rows_from_trace(trace, instance.problem.f_star, seed), _summary(trace, seed)


def _fmt(x: Optional[float]) -> str:
    if x is None:
        return "nan"
    return f"{x:.17g}"


def _rows_from_trace(trace: Trace, f_star: float, seed: int) -> list[tuple]:
    rows = []
    for rec in trace.records:
        gap = rec.f_value - f_star
        gap_avg = None if rec.f_avg_value is None else rec.f_avg_value - f_star
        rows.append((rec.k, gap, gap_avg, rec.A, rec.alpha, rec.oracle_calls, seed))
    return rows


def _summary(trace: Trace, seed: int) -> dict:
    last = trace.records[-1]
    return {
        "seed": seed,
        "final_gap": trace.output_gap,
        "final_f": last.f_value,
        "oracle_calls": last.oracle_calls,
        "iterations": last.k,
        "truncated": trace.truncated,
    }


def run_experiment(config: ExperimentConfig, out_dir: Optional[str] = None) -> dict:
    """Run every seed, write trace.csv and summary.json, return the aggregate."""
    out = out_dir or config.out_dir
    if out is None:
        raise ConfigError("no output directory: set $.output.dir or pass out_dir")
    out_path = Path(out)
    out_path.mkdir(parents=True, exist_ok=True)

    seeds = sorted(config.seeds)
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_worker, config.raw, s) for s in seeds]
            for fut in futures:
                seed, rows, summary = fut.result()
                results[seed] = (rows, summary)
    else:
        instance = build_instance(config.problem)
        for seed in seeds:
            trace = _run_single(config, instance, seed)
            results[seed] = (_rows_from_trace(trace, instance.problem.f_star, seed),
                             _summary(trace, seed))

    csv_path = out_path / "trace.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for seed in seeds:
            for k, gap, gap_avg, A, alpha, calls, s in results[seed][0]:
                fh.write(f"{k},{_fmt(gap)},{_fmt(gap_avg)},{_fmt(A)},{_fmt(alpha)},"
                         f"{calls},{s}\n")

    aggregate = _aggregate(config, seeds, results)
    json_path = out_path / "summary.json"
    with open(json_path, "w") as fh:
        json.dump(aggregate, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"csv": str(csv_path), "json": str(json_path), "aggregate": aggregate}


def _quantiles(matrix: np.ndarray) -> dict:
    return {
        "q25": [float(v) for v in np.quantile(matrix, 0.25, axis=0)],
        "q50": [float(v) for v in np.quantile(matrix, 0.50, axis=0)],
        "q75": [float(v) for v in np.quantile(matrix, 0.75, axis=0)],
    }


def _aggregate(config: ExperimentConfig, seeds: list[int], results: dict) -> dict:
    gap_rows, avg_rows = [], []
    for seed in seeds:
        rows = results[seed][0]
        gap_rows.append([r[1] for r in rows])
        avg_rows.append([r[2] for r in rows])
    n_k = min(len(r) for r in gap_rows)
    gaps = np.asarray([r[:n_k] for r in gap_rows], dtype=np.float64)
    ks = list(range(n_k))

    have_avg = all(v is not None for row in avg_rows for v in row[1:])
    quant = {"k": ks, "f_gap": _quantiles(gaps)}
    if have_avg:
        avgs = np.asarray([[np.nan if v is None else v for v in row[:n_k]]
                           for row in avg_rows], dtype=np.float64)
        quant["f_gap_avg_point"] = _quantiles(avgs[:, 1:])
        quant["f_gap_avg_point"]["k"] = ks[1:]

    noise = config.model.get("noise", {"kind": "none"})
    deterministic = noise.get("kind", "none") == "none" or float(noise.get("sigma", 0.0)) == 0.0
    aggregate = {
        "config": config.raw,
        "runs": [results[s][1] for s in seeds],
        "quantiles": quant,
        "bound_checks": {
            "deterministic": deterministic,
            # solver raises on violation, so completed deterministic runs passed
            "checked": deterministic and config.solver["method"] in ("gm", "fgm"),
            "satisfied": deterministic and config.solver["method"] in ("gm", "fgm"),
        },
    }
    rates_cfg = config.rates or {}
    window = rates_cfg.get("window", [max(2, n_k // 10), n_k - 1])
    column = rates_cfg.get("column", "f_gap")
    series = np.quantile(gaps[:, 1:], 0.5, axis=0)
    if column == "f_gap_avg_point" and have_avg:
        series = np.quantile(avgs[:, 1:], 0.5, axis=0)
    try:
        fit = estimate_rate(series, (int(window[0]), int(window[1])))
        aggregate["rate_fit"] = {
            "slope": fit.slope, "intercept": fit.intercept,
            "r_squared": fit.r_squared, "window": list(fit.window),
            "column": column,
        }
    except ContractError:
        if config.rates is not None:
            raise  # an explicitly requested fit must not fail silently
        aggregate["rate_fit"] = None  # short or fully converged default fit
    return aggregate
