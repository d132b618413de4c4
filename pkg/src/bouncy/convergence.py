"""Empirical study of the refreshment limit.

The deterministic dynamics with inertia refreshed every delta_t is coupled
to a bouncy-particle realization that shares the refresh draws: inside each
interval [n dt, (n+1) dt) the particle process spends the same exponential
variate E_n that the refreshed dynamics received as its inertia, and any
further events in the interval draw fresh exponentials keyed on
(interval, ordinal).  The two paths follow the same flow between events, so
they coincide exactly until their event sequences differ; the probability of
that shrinks linearly in delta_t.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .chains import chain_rng
from .core import AugmentedState, BOUNCE, REFRESH, SurrogateFlow, bounce_time, reflect
from .errors import Unsupported
from .hbps import HbpsSolverConfig, hbps_bounce_time
from .bps import bps_event_time
from .surrogates import linear

MATCH_TOL = 1e-9
_SOLVER = HbpsSolverConfig(newton_tol=1e-13)


@dataclass
class CouplingRun:
    """Outcome of one coupled (refreshed-dynamics, particle-process) pair."""

    delta_t: float
    horizon: float
    diverged: bool
    divergence_time: Optional[float]
    sup_distance: float


@dataclass
class PiecewisePath:
    """Flow segments plus event markers; positions evaluated right-continuously."""

    flow: SurrogateFlow
    seg_times: list = field(default_factory=list)
    seg_x: list = field(default_factory=list)
    seg_v: list = field(default_factory=list)
    events: list = field(default_factory=list)  # (time, kind)
    horizon: float = 0.0

    def add_segment(self, t: float, x: np.ndarray, v: np.ndarray) -> None:
        self.seg_times.append(float(t))
        self.seg_x.append(np.asarray(x, dtype=float).copy())
        self.seg_v.append(np.asarray(v, dtype=float).copy())

    def state_at(self, t: float):
        k = bisect_right(self.seg_times, t) - 1
        k = max(k, 0)
        dt = t - self.seg_times[k]
        return self.flow.flow(dt, self.seg_x[k], self.seg_v[k])

    def bounce_times(self) -> list[float]:
        return [t for t, kind in self.events if kind == BOUNCE]


def refreshed_simulate(
    delta_t: float,
    T: float,
    x0: np.ndarray,
    v0: np.ndarray,
    exp_stream: Sequence[float],
    flow: SurrogateFlow,
    target,
) -> PiecewisePath:
    """Bouncy dynamics with the inertia reset to exp_stream[n] at time n*delta_t."""
    if delta_t <= 0.0 or T <= 0.0:
        raise ValueError("delta_t and T must be positive")
    path = PiecewisePath(flow=flow, horizon=T)
    x = np.asarray(x0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    path.add_segment(0.0, x, v)
    n_intervals = math.ceil(T / delta_t)
    linear_line = flow.kind == "linear" and hasattr(target, "line_potential")
    for n in range(n_intervals):
        t0 = n * delta_t
        t1 = min((n + 1) * delta_t, T)
        p = float(exp_stream[n])
        if n > 0:
            path.events.append((t0, REFRESH))
        t = t0
        while t < t1:
            horizon = t1 - t
            if linear_line:
                ts = hbps_bounce_time(x, v, p, target, horizon, _SOLVER)
            else:
                ts = bounce_time(
                    AugmentedState(x, v, p), flow, target, horizon, tol=1e-13
                )
            if ts is None:
                u0 = target.potential(x) - flow.potential(x)
                x, v = flow.flow(horizon, x, v)
                p = p - ((target.potential(x) - flow.potential(x)) - u0)
                t = t1
                break
            x, v = flow.flow(ts, x, v)
            g = np.asarray(target.gradient(x)) - np.asarray(flow.gradient(x))
            v = reflect(v, g)
            p = 0.0
            t += ts
            path.events.append((t, BOUNCE))
            path.add_segment(t, x, v)
    return path


def _coupled_bps_path(
    delta_t: float,
    T: float,
    x0: np.ndarray,
    v0: np.ndarray,
    exp_stream: Sequence[float],
    extra_exp,
    target,
) -> PiecewisePath:
    """Particle process whose first event in each interval spends E_n.

    `extra_exp(interval, ordinal)` supplies the fresh exponentials for
    second and later events inside one interval.  Linear flow only.
    """
    flow = linear()
    path = PiecewisePath(flow=flow, horizon=T)
    x = np.asarray(x0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    path.add_segment(0.0, x, v)
    n_intervals = math.ceil(T / delta_t)
    for n in range(n_intervals):
        t0 = n * delta_t
        t1 = min((n + 1) * delta_t, T)
        t = t0
        ordinal = 0
        while t < t1:
            E = float(exp_stream[n]) if ordinal == 0 else float(extra_exp(n, ordinal))
            ts = bps_event_time(x, v, target, E, t1 - t, _SOLVER)
            if ts is None:
                x = x + (t1 - t) * v
                t = t1
                break
            x = x + ts * v
            v = reflect(v, target.gradient(x))
            t += ts
            ordinal += 1
            path.events.append((t, BOUNCE))
            path.add_segment(t, x, v)
    return path


def _compare_paths(
    bouncy: PiecewisePath, particle: PiecewisePath, match_tol: float
) -> tuple[bool, Optional[float], float]:
    """Event-resolution comparison plus a coarse sup distance.

    The paths share the flow between events, so any real divergence shows up
    either as mismatched bounce times or as a position/velocity gap at the
    comparison times (a 1e3 grid augmented with both event schedules).
    """
    T = bouncy.horizon
    tb = bouncy.bounce_times()
    tp = particle.bounce_times()
    divergence_time: Optional[float] = None
    for k in range(max(len(tb), len(tp))):
        if k >= len(tb):
            divergence_time = tp[k]
            break
        if k >= len(tp):
            divergence_time = tb[k]
            break
        if abs(tb[k] - tp[k]) > match_tol:
            divergence_time = min(tb[k], tp[k])
            break
    grid = np.linspace(0.0, T, 1000)
    times = np.unique(np.concatenate([grid, np.asarray(tb), np.asarray(tp)]))
    sup = 0.0
    first_gap: Optional[float] = None
    for t in times:
        xh, vh = bouncy.state_at(float(t))
        xp, vp = particle.state_at(float(t))
        gap = max(
            float(np.max(np.abs(xh - xp))), float(np.max(np.abs(vh - vp)))
        )
        if gap > sup:
            sup = gap
        if first_gap is None and gap > match_tol:
            first_gap = float(t)
    diverged = sup > match_tol
    if diverged and divergence_time is None:
        divergence_time = first_gap
    if not diverged:
        divergence_time = None
    return diverged, divergence_time, sup


def coupled_pair(
    delta_t: float,
    T: float,
    x0: np.ndarray,
    v0: np.ndarray,
    seed: int,
    target=None,
    flow: Optional[SurrogateFlow] = None,
    match_tol: float = MATCH_TOL,
    stream_key: tuple = (),
) -> CouplingRun:
    """Simulate one coupled pair and report whether the paths split."""
    if target is None:
        raise ValueError("a target is required")
    if flow is None:
        flow = linear()
    if flow.kind != "linear":
        raise Unsupported("the coupled particle process requires the linear flow")
    n_intervals = math.ceil(T / delta_t)
    shared = chain_rng(seed, *stream_key, 0).exponential(size=n_intervals)

    def extra_exp(interval: int, ordinal: int) -> float:
        return float(chain_rng(seed, *stream_key, 1, interval, ordinal).exponential())

    bouncy = refreshed_simulate(delta_t, T, x0, v0, shared, flow, target)
    particle = _coupled_bps_path(delta_t, T, x0, v0, shared, extra_exp, target)
    diverged, when, sup = _compare_paths(bouncy, particle, match_tol)
    return CouplingRun(
        delta_t=delta_t,
        horizon=T,
        diverged=diverged,
        divergence_time=when,
        sup_distance=sup,
    )


def divergence_curve(
    delta_t_grid: Sequence[float],
    replications: int,
    T: float,
    target,
    seed: int,
    workers: int = 1,
) -> list[dict]:
    """Monte Carlo estimate of the path-splitting probability per delta_t.

    Each replication draws a stationary-style start x0, v0 ~ N(0, I) from
    its own stream and runs one coupled pair.  Returns one row per delta_t
    with the frequency and its binomial standard error.
    """
    if replications < 1:
        raise ValueError("replications must be positive")
    jobs = [
        (i, r, float(dt)) for i, dt in enumerate(delta_t_grid) for r in range(replications)
    ]
    if workers > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            flags = list(
                pool.map(
                    _one_replication,
                    [(seed, T, target, i, r, dt) for i, r, dt in jobs],
                    chunksize=64,
                )
            )
    else:
        flags = [_one_replication((seed, T, target, i, r, dt)) for i, r, dt in jobs]
    rows = []
    for i, dt in enumerate(delta_t_grid):
        sub = [f for (ji, jr, jdt), f in zip(jobs, flags) if ji == i]
        freq = float(np.mean(sub))
        se = math.sqrt(max(freq * (1.0 - freq), 0.0) / replications)
        rows.append(
            {
                "delta_t": float(dt),
                "frequency": freq,
                "std_error": se,
                "replications": replications,
            }
        )
    return rows


def _one_replication(args) -> bool:
    seed, T, target, i, r, dt = args
    d = target.dim
    init_rng = chain_rng(seed, i, r, 2)
    x0 = init_rng.standard_normal(d)
    v0 = init_rng.standard_normal(d)
    run = coupled_pair(dt, T, x0, v0, seed, target=target, stream_key=(i, r))
    return run.diverged
