"""Bouncy sampler specialized to the flat surrogate (linear flow).

With straight-line segments the depletion equation restricts to a scalar
function of the travel time, and on log-concave targets the first root is
found by safeguarded Newton without any scan grid.  Half-space constraints
are handled by elastic reflection off the boundary, which leaves the
potential, speed and inertia untouched.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rootfind
from .chains import Chain, chain_rng
from .core import (
    BOUNCE,
    BOUNDARY,
    AugmentedState,
    EventRecord,
    reflect,
)
from .errors import EventStorm, NotLogConcave, Unsupported
from .targets import boundary_hit, check_feasible, line_potential

BOUNDARY_TIE = 1e-12


@dataclass(frozen=True)
class HbpsSolverConfig:
    """Tolerances for the exact bounce-time solver."""

    newton_tol: float = 1e-10
    max_newton_iters: int = 50
    scan_step: Optional[float] = None  # None = adaptive
    max_events: int = 1_000_000

    def __post_init__(self):
        if self.newton_tol <= 0 or self.max_newton_iters <= 0 or self.max_events <= 0:
            raise ValueError("solver configuration values must be positive")
        if self.scan_step is not None and self.scan_step <= 0:
            raise ValueError("scan_step must be positive")


DEFAULT_CONFIG = HbpsSolverConfig()


def _deplete(p: float, u_start: float, u_end: float) -> float:
    # Single shared expression so the factorized sampler reproduces the
    # arithmetic bit for bit.
    return p - (u_end - u_start)


def depletion_line(target, x: np.ndarray, v: np.ndarray):
    """Depletion (D, D', D'') along x + t v with D(0) = 0."""
    g, gp, gpp = line_potential(target, x, v)
    g0 = g(0.0)
    return (lambda t: g(t) - g0), gp, gpp


def hbps_bounce_time(
    x: np.ndarray,
    v: np.ndarray,
    p: float,
    target,
    horizon: float,
    config: HbpsSolverConfig = DEFAULT_CONFIG,
) -> Optional[float]:
    """Smallest t in (0, horizon] with U(x + t v) - U(x) = p.

    On log-concave targets this solves the root directly (Newton on the
    increasing branch, locating the line minimum first when the motion starts
    downhill).  Detected non-convexity falls back to the generic
    scan-and-polish solver.  Returns 0.0 when the inertia is already
    exhausted and depleting, None when no root exists in the window.
    """
    try:
        D, Dp, Dpp = depletion_line(target, x, v)
    except Unsupported:
        D, Dp, Dpp = _depletion_from_evals(target, x, v)

    def f(t: float) -> float:
        return D(t) - p

    d0 = Dp(0.0)
    rootfind.check_start(p, d0)
    if getattr(target, "log_concave", False) and Dpp is not None:
        try:
            return rootfind.convex_first_passage(
                f, Dp, Dpp, horizon, config.newton_tol, config.max_newton_iters
            )
        except NotLogConcave:
            pass
    if p <= rootfind.EPS_INERTIA and d0 > rootfind.EPS_GRADIENT:
        return 0.0
    step = config.scan_step
    if step is None:
        step = min(0.1 * horizon, 1.0 / (1.0 + abs(d0)))
    return rootfind.scan_first_passage(f, Dp, horizon, step, config.newton_tol)


def _depletion_from_evals(target, x, v):
    u0 = target.potential(x)

    def D(t: float) -> float:
        return target.potential(x + t * v) - u0

    def Dp(t: float) -> float:
        return float(np.dot(v, target.gradient(x + t * v)))

    return D, Dp, None


def constrained_simulate(
    T: float,
    state0: AugmentedState,
    target,
    config: HbpsSolverConfig = DEFAULT_CONFIG,
    record_events: bool = True,
    max_events: Optional[int] = None,
) -> tuple[AugmentedState, list[EventRecord]]:
    """Linear-flow bouncy dynamics with elastic boundary reflections.

    At each step the earlier of the inertia-depletion time and the first
    boundary crossing is processed; ties within 1e-12 favor the boundary so
    the state stays feasible.  Boundary events reflect the velocity against
    the constraint normal and leave the inertia untouched.
    """
    if T <= 0.0:
        raise ValueError("T must be positive")
    constraints = tuple(getattr(target, "constraints", ()) or ())
    if constraints:
        check_feasible(constraints, state0.x)
    limit = max_events if max_events is not None else config.max_events
    x, v, p = state0.x.copy(), state0.v.copy(), state0.p
    tau = 0.0
    events: list[EventRecord] = []
    n_events = 0
    while True:
        remaining = T - tau
        if remaining <= 0.0:
            break
        tb = hbps_bounce_time(x, v, p, target, remaining, config)
        hit = boundary_hit(constraints, x, v) if constraints else None
        tc = hit[0] if hit is not None else None

        bounce_applicable = tb is not None and tb <= remaining
        boundary_applicable = tc is not None and tc <= remaining
        if boundary_applicable and bounce_applicable:
            boundary_first = tc <= tb + BOUNDARY_TIE
        elif boundary_applicable:
            boundary_first = True
        elif bounce_applicable:
            boundary_first = False
        else:
            u0 = target.potential(x)
            x = x + remaining * v
            p = _deplete(p, u0, target.potential(x))
            tau = T
            break

        n_events += 1
        if n_events > limit:
            raise EventStorm(f"more than {limit} events in one trajectory")
        if boundary_first:
            u0 = target.potential(x)
            x = x + tc * v
            p = _deplete(p, u0, target.potential(x))
            v = reflect(v, hit[1].normal)
            tau += tc
            if record_events:
                events.append(EventRecord(tau, BOUNDARY, hit[1].normal.copy()))
        else:
            x = x + tb * v
            grad = target.gradient(x)
            v = reflect(v, grad)
            p = 0.0
            tau += tb
            if record_events:
                events.append(EventRecord(tau, BOUNCE, grad))
    return AugmentedState(x, v, p), events


def hbps_sample(
    n: int,
    T: float,
    x0: np.ndarray,
    target,
    rng_seed: int,
    config: HbpsSolverConfig = DEFAULT_CONFIG,
    thin: int = 1,
) -> Chain:
    """Run n iterations of the linear-flow bouncy sampler."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if T <= 0.0:
        raise ValueError("T must be positive")
    x = np.asarray(x0, dtype=float).copy()
    d = x.shape[0]
    constraints = tuple(getattr(target, "constraints", ()) or ())
    if constraints:
        check_feasible(constraints, x)
    rng = chain_rng(rng_seed)
    stored = []
    event_counts = np.zeros(n, dtype=np.int64)
    t_start = time.perf_counter()
    for i in range(n):
        v = rng.standard_normal(d)
        p = float(rng.exponential())
        state, events = constrained_simulate(
            T, AugmentedState(x, v, p), target, config, record_events=True
        )
        x = state.x
        event_counts[i] = len(events)
        if i % thin == 0:
            stored.append(x.copy())
    wall = time.perf_counter() - t_start
    return Chain(
        samples=np.asarray(stored),
        wall_seconds=wall,
        event_counts=event_counts,
        meta={"sampler": "hbps", "travel_time": T, "seed": rng_seed, "thin": thin},
    )
