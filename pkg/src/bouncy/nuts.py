"""No-U-Turn travel-time adaptation wrapped around the linear-flow dynamics.

Trajectory length is adapted by multiplicative doubling: at depth j the path
is extended by 2^j base-step segments in a uniformly random time direction,
stopping when the path (or any doubled subtree) makes a U-turn.  Because the
dynamics is simulated exactly, every state on the path sits on the same
augmented-energy level, so the returned state is drawn uniformly from the
valid path states with no weighting step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chains import Chain, chain_rng
from .core import AugmentedState
from .errors import NotPSD
from .hbps import DEFAULT_CONFIG, HbpsSolverConfig, constrained_simulate


@dataclass(frozen=True)
class NutsConfig:
    """Doubling parameters; base_step is the trajectory-time quantum."""

    base_step: float
    max_depth: int = 10
    uturn_tol: float = 0.0
    solver: HbpsSolverConfig = field(default_factory=HbpsSolverConfig)

    def __post_init__(self):
        if self.base_step <= 0.0:
            raise ValueError("base_step must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")


def heuristic_base_step(covariance_estimate: np.ndarray, rel_tol: float = 1e-6) -> float:
    """0.1 * sqrt(largest eigenvalue), by power iteration on the covariance."""
    A = np.atleast_2d(np.asarray(covariance_estimate, dtype=float))
    d = A.shape[0]
    w = np.ones(d) / np.sqrt(d)
    lam_prev = None
    for _ in range(10_000):
        y = A @ w
        lam = float(w @ y)
        if lam < -1e-10:
            raise NotPSD(f"negative Rayleigh quotient {lam}")
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            raise NotPSD("matrix has no positive spectrum")
        w = y / norm
        if lam_prev is not None and abs(lam - lam_prev) <= rel_tol * max(abs(lam), 1e-30):
            break
        lam_prev = lam
    if lam <= 0.0:
        raise NotPSD("largest eigenvalue is not positive")
    return 0.1 * float(np.sqrt(lam))


@dataclass
class _Tree:
    minus: AugmentedState  # earliest state, forward-time orientation
    plus: AugmentedState  # latest state, forward-time orientation
    candidate: AugmentedState
    n: int
    ok: bool
    states: Optional[list] = None


@dataclass
class NutsStepResult:
    state: AugmentedState
    depth: int
    total_time: float
    n_states: int
    max_depth_reached: bool
    states: Optional[list] = None


def _advance(state: AugmentedState, direction: int, dt: float, target, solver):
    """One base-step of the dynamics, backward in time via reversibility."""
    if direction > 0:
        out, _ = constrained_simulate(dt, state, target, solver, record_events=False)
        return out
    flipped = AugmentedState(state.x, -state.v, state.p)
    out, _ = constrained_simulate(dt, flipped, target, solver, record_events=False)
    return AugmentedState(out.x, -out.v, out.p)


def _uturn(minus: AugmentedState, plus: AugmentedState, tol: float) -> bool:
    span = plus.x - minus.x
    return float(span @ minus.v) < tol or float(span @ plus.v) < tol


def _build(
    state: AugmentedState,
    direction: int,
    depth: int,
    config: NutsConfig,
    target,
    rng: np.random.Generator,
    collect: bool,
) -> _Tree:
    if depth == 0:
        nxt = _advance(state, direction, config.base_step, target, config.solver)
        return _Tree(nxt, nxt, nxt, 1, True, [nxt] if collect else None)
    first = _build(state, direction, depth - 1, config, target, rng, collect)
    if not first.ok:
        return first
    outer = first.plus if direction > 0 else first.minus
    second = _build(outer, direction, depth - 1, config, target, rng, collect)
    if direction > 0:
        minus, plus = first.minus, second.plus
    else:
        minus, plus = second.minus, first.plus
    n = first.n + second.n
    candidate = first.candidate
    if rng.random() < second.n / n:
        candidate = second.candidate
    ok = second.ok and not _uturn(minus, plus, config.uturn_tol)
    states = (first.states + second.states) if collect else None
    return _Tree(minus, plus, candidate, n, ok, states)


def nuts_step(
    x: np.ndarray,
    config: NutsConfig,
    target,
    rng: np.random.Generator,
    collect_states: bool = False,
) -> NutsStepResult:
    """One No-U-Turn transition from position x.

    Draws v ~ N(0, I) and p ~ Exp(1), doubles the trajectory until the
    U-turn criterion (x+ - x-) . v-+ < uturn_tol fires for the whole path or
    a doubled subtree, and returns a uniform draw from the valid path states.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    v = rng.standard_normal(d)
    p = float(rng.exponential())
    start = AugmentedState(x.copy(), v, p)
    minus = plus = start
    candidate = start
    n_valid = 1
    states = [start] if collect_states else None
    depth = 0
    while depth < config.max_depth:
        direction = 1 if int(rng.integers(0, 2)) else -1
        if direction > 0:
            tree = _build(plus, 1, depth, config, target, rng, collect_states)
            plus = tree.plus
        else:
            tree = _build(minus, -1, depth, config, target, rng, collect_states)
            minus = tree.minus
        if tree.ok:
            # Reservoir merge keeps the candidate uniform over valid states.
            if rng.random() < tree.n / (n_valid + tree.n):
                candidate = tree.candidate
            n_valid += tree.n
            if collect_states:
                states.extend(tree.states)
        depth += 1
        if not tree.ok or _uturn(minus, plus, config.uturn_tol):
            return NutsStepResult(
                candidate, depth, (n_valid - 1) * config.base_step, n_valid, False, states
            )
    return NutsStepResult(
        candidate, depth, (n_valid - 1) * config.base_step, n_valid, True, states
    )


def nuts_sample(
    n: int,
    config: NutsConfig,
    x0: np.ndarray,
    target,
    rng_seed: int,
    thin: int = 1,
) -> Chain:
    """Run n No-U-Turn steps; records the average selected travel time,
    which serves as the tuning anchor for the fixed-time sampler."""
    if n < 1:
        raise ValueError("n must be at least 1")
    x = np.asarray(x0, dtype=float).copy()
    rng = chain_rng(rng_seed)
    stored = []
    event_counts = np.zeros(n, dtype=np.int64)
    total_times = np.zeros(n)
    depths = np.zeros(n, dtype=np.int64)
    max_depth_hits = 0
    t_start = time.perf_counter()
    for i in range(n):
        res = nuts_step(x, config, target, rng)
        x = res.state.x
        total_times[i] = res.total_time
        depths[i] = res.depth
        event_counts[i] = res.n_states
        max_depth_hits += int(res.max_depth_reached)
        if i % thin == 0:
            stored.append(x.copy())
    wall = time.perf_counter() - t_start
    return Chain(
        samples=np.asarray(stored),
        wall_seconds=wall,
        event_counts=event_counts,
        meta={
            "sampler": "hbps-nuts",
            "base_step": config.base_step,
            "max_depth": config.max_depth,
            "seed": rng_seed,
            "thin": thin,
            "mean_total_time": float(np.mean(total_times)),
            "mean_depth": float(np.mean(depths)),
            "max_depth_hits": max_depth_hits,
        },
    )
