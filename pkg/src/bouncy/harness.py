"""Configuration, chain persistence, and the benchmark/convergence drivers.

Config files are JSON.  Schema (see README for the full list):

    {
      "sampler": "hbps" | "hbps-nuts" | "hbps-split" | "hbps-local" | "bps",
      "target": {"type": "gaussian", "mean": [...], "covariance": [[...]]},
      "iterations": 1000, "seed": 7, "output_dir": "out",
      "thin": 1, "chains": 1, "x0": [...],
      ... sampler-specific keys ...
    }
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bps as bps_mod
from . import convergence, integrator, local, nuts, surrogates
from .chains import Chain, read_chain_csv, write_chain_csv
from .diagnostics import ess, min_ess_report
from .errors import BouncyError, ParseError
from .hbps import HbpsSolverConfig, hbps_sample
from .targets import (
    GaussianTarget,
    LinearConstraint,
    LogisticRegressionTarget,
    MixtureTarget,
    TruncatedGaussianTarget,
    load_design_csv,
)

SAMPLERS = ("hbps", "hbps-nuts", "hbps-split", "hbps-local", "bps")
WORKERS_ENV = "BOUNCY_WORKERS"
VERSION = "bouncy 0.1.0"


def _require(cfg: dict, key: str, kind=None):
    if key not in cfg:
        raise ParseError(f"config key '{key}' is missing")
    val = cfg[key]
    if kind is not None and not isinstance(val, kind):
        raise ParseError(f"config key '{key}' has the wrong type")
    return val


def _optional(cfg: dict, key: str, default=None, kind=None):
    if key not in cfg:
        return default
    val = cfg[key]
    if kind is not None and not isinstance(val, kind):
        raise ParseError(f"config key '{key}' has the wrong type")
    return val


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ParseError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ParseError("config must be a JSON object")
    return cfg


def build_target(spec: dict):
    if not isinstance(spec, dict):
        raise ParseError("config key 'target' must be an object")
    ttype = _require(spec, "type", str)
    constraints = []
    for c in _optional(spec, "constraints", [], list):
        constraints.append(
            LinearConstraint(np.asarray(c["normal"], dtype=float), float(c.get("offset", 0.0)))
        )
    if ttype == "gaussian":
        mean = _optional(spec, "mean")
        if "covariance" in spec:
            return GaussianTarget.from_covariance(
                spec["covariance"], mean=mean, constraints=constraints
            )
        if "precision" in spec:
            prec = np.asarray(spec["precision"], dtype=float)
            return GaussianTarget(
                np.linalg.cholesky(prec), mean=mean, constraints=constraints
            )
        raise ParseError("config key 'target.covariance' (or 'target.precision') is missing")
    if ttype == "truncated-gaussian":
        base = GaussianTarget.from_covariance(
            _require(spec, "covariance"), mean=_optional(spec, "mean")
        )
        return TruncatedGaussianTarget(base, _require(spec, "signs", list))
    if ttype == "logistic":
        if "design_csv" in spec:
            X, y = load_design_csv(spec["design_csv"])
        else:
            X = np.asarray(_require(spec, "design", list), dtype=float)
            y = np.asarray(_require(spec, "labels", list), dtype=float)
        scale = _optional(spec, "prior_scale", 1.0)
        return LogisticRegressionTarget(
            X, y, prior_scale=scale, constraints=constraints
        )
    if ttype == "mixture":
        return MixtureTarget(_require(spec, "components", list))
    raise ParseError(f"config key 'target.type' has unknown value {ttype!r}")


def _default_x0(target) -> np.ndarray:
    x0 = np.zeros(target.dim)
    signs = getattr(target, "signs", None)
    if signs is not None:
        x0 = np.asarray(signs, dtype=float).copy()
    elif getattr(target, "constraints", ()):
        # Nudge to the feasible side of every half-space through the origin.
        for c in target.constraints:
            if c.margin(x0) <= 0:
                x0 = x0 + c.normal * (c.offset - float(c.normal @ x0) + 1.0) / float(
                    c.normal @ c.normal
                )
    return x0


def _solver_from(cfg: dict) -> HbpsSolverConfig:
    return HbpsSolverConfig(
        newton_tol=float(_optional(cfg, "newton_tol", 1e-10)),
        max_newton_iters=int(_optional(cfg, "max_newton_iters", 50)),
        scan_step=_optional(cfg, "scan_step"),
        max_events=int(_optional(cfg, "max_events", 1_000_000)),
    )


def chain_seed(seed: int, chain_index: int) -> int:
    """Counter-based per-chain seed; chain 0 keeps the base seed."""
    if chain_index == 0:
        return seed
    ss = np.random.SeedSequence(entropy=seed & (2**64 - 1), spawn_key=(chain_index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_single_chain(cfg: dict, chain_index: int) -> Chain:
    """Build everything from the config and run one chain.

    Module-level so chains can run in worker processes; chain k draws from a
    stream keyed on (seed, k) regardless of scheduling, making parallel and
    sequential runs bitwise identical.
    """
    sampler = _require(cfg, "sampler", str)
    if sampler not in SAMPLERS:
        raise ParseError(f"config key 'sampler' has unknown value {sampler!r}")
    target = build_target(_require(cfg, "target"))
    n = int(_require(cfg, "iterations", int))
    if n < 1:
        raise ParseError("config key 'iterations' must be >= 1")
    seed = int(_require(cfg, "seed", int))
    thin = int(_optional(cfg, "thin", 1, int))
    if thin < 1:
        raise ParseError("config key 'thin' must be >= 1")
    x0 = _optional(cfg, "x0")
    x0 = _default_x0(target) if x0 is None else np.asarray(x0, dtype=float)
    solver = _solver_from(cfg)
    cseed = chain_seed(seed, chain_index)

    if sampler == "hbps":
        T = float(_require(cfg, "travel_time", (int, float)))
        chain = hbps_sample(n, T, x0, target, cseed, config=solver, thin=thin)
    elif sampler == "bps":
        config = bps_mod.BpsConfig(
            refresh_rate=float(_optional(cfg, "refresh_rate", 1.0)),
            total_time=float(_require(cfg, "total_time", (int, float))),
            solver=solver,
            refresh_mode=_optional(cfg, "refresh_mode", "competing", str),
        )
        chain = bps_mod.bps_sample(n, config, x0, target, cseed, thin=thin)
    elif sampler == "hbps-local":
        T = float(_require(cfg, "travel_time", (int, float)))
        chain = local.zigzag_sample(n, T, x0, target, cseed, config=solver, thin=thin)
    elif sampler == "hbps-split":
        config = integrator.SplitConfig(
            step=float(_require(cfg, "step", (int, float))),
            steps_per_proposal=int(_require(cfg, "steps_per_proposal", int)),
            inner_flow=_optional(cfg, "inner_flow", "exact", str),
            leapfrog_substeps=int(_optional(cfg, "leapfrog_substeps", 1, int)),
        )
        flow = surrogates.from_name(
            _optional(cfg, "surrogate", "linear", str),
            omega=float(_optional(cfg, "omega", 1.0)),
            center=_optional(cfg, "center"),
        )
        chain = integrator.metropolis_sample(
            n, config, x0, flow, target, cseed, thin=thin
        )
    else:  # hbps-nuts
        base_step = _optional(cfg, "base_step", "auto")
        if base_step == "auto":
            pilot_n = int(_optional(cfg, "pilot_iterations", 500, int))
            pilot_T = float(_optional(cfg, "pilot_travel_time", 1.0))
            pilot = hbps_sample(pilot_n, pilot_T, x0, target, seed ^ 0x9E3779B9)
            cov = np.cov(pilot.samples.T) if target.dim > 1 else np.atleast_2d(
                np.var(pilot.samples)
            )
            base_step = nuts.heuristic_base_step(cov)
        config = nuts.NutsConfig(
            base_step=float(base_step),
            max_depth=int(_optional(cfg, "max_depth", 10, int)),
            solver=solver,
        )
        chain = nuts.nuts_sample(n, config, x0, target, cseed, thin=thin)
    chain.meta["chain_index"] = chain_index
    chain.meta["version"] = VERSION
    return chain


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run(config_path) -> int:
    """`sample` driver: write chain_<k>.csv and summary.json, return exit code."""
    try:
        cfg = load_config(config_path)
        n_chains = int(_optional(cfg, "chains", 1, int))
        out_dir = _require(cfg, "output_dir", str)
    except ParseError as exc:
        print(f"config error: {exc}")
        return 2
    os.makedirs(out_dir, exist_ok=True)
    try:
        chains = _run_chains(cfg, n_chains)
    except ParseError as exc:
        print(f"config error: {exc}")
        return 2
    except BouncyError as exc:
        print(f"sampler failure: {type(exc).__name__}: {exc}")
        return 3
    summary = {"config": cfg, "seed": cfg.get("seed"), "version": VERSION, "chains": []}
    for k, chain in enumerate(chains):
        write_chain_csv(os.path.join(out_dir, f"chain_{k}.csv"), chain.samples)
        min_ess, argmin_dim, per_sec = _ess_block(chain)
        block = {
            "chain": k,
            "min_ess": min_ess,
            "argmin_dimension": argmin_dim,
            "ess_per_second": per_sec,
            "wall_seconds": chain.wall_seconds,
            "events_total": int(np.sum(chain.event_counts)),
        }
        if "acceptance_rate" in chain.meta:
            block["acceptance_rate"] = chain.meta["acceptance_rate"]
        if "mean_total_time" in chain.meta:
            block["mean_total_time"] = chain.meta["mean_total_time"]
        summary["chains"].append(block)
    finite = [b["min_ess"] for b in summary["chains"] if b["min_ess"] is not None]
    summary["min_ess_total"] = float(np.sum(finite)) if finite else None
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _ess_block(chain: Chain):
    if chain.samples.shape[0] < 100:
        return None, None, None
    try:
        min_ess, argmin_dim, per_sec = min_ess_report(chain)
    except BouncyError:
        return None, None, None
    return float(min_ess), argmin_dim, float(per_sec)


def _run_chains(cfg: dict, n_chains: int) -> list[Chain]:
    workers = _workers()
    if workers > 1 and n_chains > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_single_chain, cfg, k) for k in range(n_chains)]
            return [f.result() for f in futures]
    return [run_single_chain(cfg, k) for k in range(n_chains)]


def converge(config_path) -> int:
    """`converge` driver: divergence frequency per delta_t, written as CSV."""
    try:
        cfg = load_config(config_path)
        grid = _require(cfg, "delta_t_grid", list)
        reps = int(_require(cfg, "replications", int))
        T = float(_require(cfg, "horizon", (int, float)))
        seed = int(_require(cfg, "seed", int))
        out_path = _require(cfg, "output", str)
        target = build_target(_require(cfg, "target"))
    except ParseError as exc:
        print(f"config error: {exc}")
        return 2
    try:
        rows = convergence.divergence_curve(
            grid, reps, T, target, seed, workers=_workers()
        )
    except BouncyError as exc:
        print(f"sampler failure: {type(exc).__name__}: {exc}")
        return 3
    parent = os.path.dirname(out_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("delta_t,frequency,std_error,replications\n")
        for row in rows:
            fh.write(
                f"{row['delta_t']:.17g},{row['frequency']:.17g},"
                f"{row['std_error']:.17g},{row['replications']}\n"
            )
    return 0


def ess_command(chain_path) -> int:
    try:
        samples = read_chain_csv(chain_path)
    except (OSError, ValueError) as exc:
        print(f"cannot read chain: {exc}")
        return 2
    values = [ess(samples[:, j]) for j in range(samples.shape[1])]
    print(
        json.dumps(
            {
                "per_dimension": values,
                "min_ess": min(values),
                "argmin_dimension": int(np.argmin(values)),
                "n_samples": int(samples.shape[0]),
            },
            indent=2,
        )
    )
    return 0


def benchmark_grid(
    target,
    iterations: int,
    seeds,
    travel_times,
    refresh_rates,
    x0: Optional[np.ndarray] = None,
    thin: int = 1,
) -> list[dict]:
    """Grid study shaped like the paper-style relative-ESS tables.

    Runs the deterministic sampler over the travel-time grid and the
    particle sampler over (travel_time x refresh_rate); each cell reports
    min-ESS per second averaged over the seeds, plus the value relative to
    the best particle-sampler cell.
    """
    x0 = np.zeros(target.dim) if x0 is None else np.asarray(x0, dtype=float)
    rows = []
    for T in travel_times:
        per_seed = []
        for seed in seeds:
            chain = hbps_sample(iterations, float(T), x0, target, int(seed), thin=thin)
            per_seed.append(min_ess_report(chain))
        rows.append(_bench_row("hbps", T, None, per_seed))
    for T in travel_times:
        for lam in refresh_rates:
            per_seed = []
            for seed in seeds:
                config = bps_mod.BpsConfig(refresh_rate=float(lam), total_time=float(T))
                chain = bps_mod.bps_sample(
                    iterations, config, x0, target, int(seed), thin=thin
                )
                per_seed.append(min_ess_report(chain))
            rows.append(_bench_row("bps", T, lam, per_seed))
    best_bps = max(
        (r["ess_per_second"] for r in rows if r["sampler"] == "bps"), default=math.nan
    )
    for r in rows:
        r["relative_to_best_bps"] = (
            r["ess_per_second"] / best_bps if best_bps and best_bps > 0 else math.nan
        )
    return rows


def _bench_row(sampler, T, lam, per_seed):
    return {
        "sampler": sampler,
        "travel_time": float(T),
        "refresh_rate": None if lam is None else float(lam),
        "min_ess": float(np.mean([m for m, _, _ in per_seed])),
        "ess_per_second": float(np.mean([s for _, _, s in per_seed])),
    }


def benchmark(config_path) -> int:
    try:
        cfg = load_config(config_path)
        target = build_target(_require(cfg, "target"))
        iterations = int(_require(cfg, "iterations", int))
        seeds = _require(cfg, "seeds", list)
        travel = _require(cfg, "travel_time_grid", list)
        refresh = _require(cfg, "refresh_rate_grid", list)
        out_path = _require(cfg, "output", str)
    except ParseError as exc:
        print(f"config error: {exc}")
        return 2
    try:
        rows = benchmark_grid(target, iterations, seeds, travel, refresh)
    except BouncyError as exc:
        print(f"sampler failure: {type(exc).__name__}: {exc}")
        return 3
    parent = os.path.dirname(out_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sampler,travel_time,refresh_rate,min_ess,ess_per_second,relative_to_best_bps\n")
        for r in rows:
            lam = "" if r["refresh_rate"] is None else f"{r['refresh_rate']:.17g}"
            fh.write(
                f"{r['sampler']},{r['travel_time']:.17g},{lam},"
                f"{r['min_ess']:.17g},{r['ess_per_second']:.17g},"
                f"{r['relative_to_best_bps']:.17g}\n"
            )
    return 0
