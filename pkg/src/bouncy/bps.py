"""Reference bouncy particle sampler: linear flow, Poisson bounce events,
velocity refreshment.

This is the stochastic counterpart of the deterministic linear-flow sampler:
bounce times come from an inhomogeneous Poisson process with rate
[v^T grad U(x_t)]^+ instead of a depleting inertia.  Refreshment is simulated
either with an independent competing exponential clock (default) or by
superposing the refresh rate into the event rate and thinning; the two are
equivalent by Poisson superposition.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rootfind
from .chains import Chain, chain_rng
from .core import BOUNCE, BOUNDARY, END, REFRESH, reflect
from .errors import EventStorm, NotLogConcave
from .hbps import HbpsSolverConfig, _depletion_from_evals, depletion_line
from .targets import boundary_hit, check_feasible

BOUNDARY_TIE = 1e-12


@dataclass(frozen=True)
class BpsConfig:
    """Run parameters for the bouncy particle sampler."""

    refresh_rate: float = 1.0
    total_time: float = 1.0
    solver: HbpsSolverConfig = field(default_factory=HbpsSolverConfig)
    refresh_mode: str = "competing"  # or "thinning"

    def __post_init__(self):
        if self.refresh_rate < 0.0:
            raise ValueError("refresh_rate must be nonnegative")
        if self.total_time <= 0.0:
            raise ValueError("total_time must be positive")
        if self.refresh_mode not in ("competing", "thinning"):
            raise ValueError("refresh_mode must be 'competing' or 'thinning'")


def _line_funcs(target, x, v):
    try:
        return depletion_line(target, x, v)
    except Exception:
        return _depletion_from_evals(target, x, v)


def bps_event_time(
    x: np.ndarray,
    v: np.ndarray,
    target,
    E: float,
    horizon: float,
    config: HbpsSolverConfig = HbpsSolverConfig(),
) -> Optional[float]:
    """First time the accumulated positive-part rate reaches E.

    Solves inf{t > 0 : int_0^t [v^T grad U(x + s v)]^+ ds = E}.  On
    log-concave targets the directional derivative crosses zero at most
    once, so the crossing is located first and the potential difference is
    solved beyond it; otherwise positive-rate stretches are accumulated one
    by one along a scan grid.
    """
    if E <= 0.0:
        raise ValueError("E must be positive")
    if horizon <= 0.0:
        return None
    D, Dp, Dpp = _line_funcs(target, x, v)
    if getattr(target, "log_concave", False) and Dpp is not None:
        try:
            return _logconcave_passage(D, Dp, Dpp, E, horizon, config)
        except NotLogConcave:
            pass
    return _positive_part_passage(D, Dp, E, horizon, config)


def _logconcave_passage(D, Dp, Dpp, E, horizon, config):
    d0 = Dp(0.0)
    if d0 >= 0.0:
        t_min = 0.0
    else:
        if Dp(horizon) <= 0.0:
            return None  # rate identically zero inside the window
        t_min = rootfind._convex_argmin(
            Dp, Dpp, horizon, config.newton_tol, config.max_newton_iters
        )
    base = D(t_min)

    def f(t: float) -> float:
        return D(t) - base - E

    fh = f(horizon)
    if fh < 0.0:
        return None
    return rootfind.polish_root(
        f, Dp, t_min, horizon, -E, fh, config.newton_tol, config.max_newton_iters * 2
    )


def _rate_sign_knots(Dp, horizon, step):
    """Partition [0, horizon] at the (scanned and polished) zeros of Dp."""
    knots = [0.0]
    t_prev, d_prev = 0.0, Dp(0.0)
    t = min(step, horizon)
    n = 0
    while True:
        d = Dp(t)
        if d_prev < 0.0 <= d:
            knots.append(
                rootfind.polish_root(Dp, lambda s: 0.0, t_prev, t, d_prev, d, 1e-12)
            )
        elif d_prev > 0.0 >= d:
            knots.append(
                rootfind.polish_root(
                    lambda s: -Dp(s), lambda s: 0.0, t_prev, t, -d_prev, -d, 1e-12
                )
            )
        if t >= horizon:
            break
        t_prev, d_prev = t, d
        t = min(t + step, horizon)
        n += 1
        if n > rootfind.MAX_SCAN_STEPS:
            raise EventStorm("rate sign scan budget exceeded")
    knots.append(horizon)
    return knots


def _positive_part_passage(D, Dp, E, horizon, config, linear_rate=0.0):
    """Generic first arrival of the rate [Dp]^+ + linear_rate."""
    step = config.scan_step
    if step is None:
        step = min(0.1 * horizon, 1.0 / (1.0 + abs(Dp(0.0))))
    knots = _rate_sign_knots(Dp, horizon, step)
    acc = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        positive = Dp(0.5 * (a + b)) > 0.0
        da = D(a)
        gain = (D(b) - da if positive else 0.0) + linear_rate * (b - a)
        if acc + gain >= E:

            def f(t: float) -> float:
                part = (D(t) - da) if positive else 0.0
                return acc + part + linear_rate * (t - a) - E

            def fp(t: float) -> float:
                return (max(Dp(t), 0.0) if positive else 0.0) + linear_rate

            return rootfind.polish_root(
                f, fp, a, b, acc - E, acc + gain - E, config.newton_tol
            )
        acc += gain
    return None


def _combined_arrival(target, x, v, refresh_rate, E, horizon, config):
    """First arrival of the superposed rate [v^T grad U]^+ + refresh_rate.

    Returns (t, Dp) where t is None when no arrival occurs in the window.
    """
    D, Dp, Dpp = _line_funcs(target, x, v)
    if getattr(target, "log_concave", False) and Dpp is not None:
        d0 = Dp(0.0)
        if d0 >= 0.0:
            t_min = 0.0
        elif Dp(horizon) <= 0.0:
            t_min = horizon
        else:
            t_min = rootfind._convex_argmin(
                Dp, Dpp, horizon, config.newton_tol, config.max_newton_iters
            )
        head = refresh_rate * t_min
        if refresh_rate > 0.0 and head >= E:
            return E / refresh_rate, Dp
        base = D(t_min)

        def f(t: float) -> float:
            part = D(t) - base if t > t_min else 0.0
            return refresh_rate * t + part - E

        def fp(t: float) -> float:
            return refresh_rate + (max(Dp(t), 0.0) if t > t_min else 0.0)

        fh = f(horizon)
        if fh < 0.0:
            return None, Dp
        t = rootfind.polish_root(
            f, fp, t_min, horizon, head - E, fh, config.newton_tol,
            config.max_newton_iters * 2,
        )
        return t, Dp
    t = _positive_part_passage(D, Dp, E, horizon, config, linear_rate=refresh_rate)
    return t, Dp


def bps_sample(
    n: int,
    config: BpsConfig,
    x0: np.ndarray,
    target,
    rng_seed: int,
    thin: int = 1,
) -> Chain:
    """Simulate the continuous-time process, storing a sample every
    config.total_time units of trajectory time.

    Velocity refreshes draw v ~ N(0, I); boundary crossings (if the target
    declares constraints) reflect elastically like any other sampler here.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    x = np.asarray(x0, dtype=float).copy()
    d = x.shape[0]
    constraints = tuple(getattr(target, "constraints", ()) or ())
    if constraints:
        check_feasible(constraints, x)
    rng = chain_rng(rng_seed)
    solver = config.solver
    lam = config.refresh_rate
    thinning = config.refresh_mode == "thinning"
    v = rng.standard_normal(d)
    stored = []
    event_counts = np.zeros(n, dtype=np.int64)
    bounce_total = 0
    refresh_total = 0
    t_start = time.perf_counter()
    for i in range(n):
        remaining = config.total_time
        n_events = 0
        while remaining > 0.0:
            hit = boundary_hit(constraints, x, v) if constraints else None
            tc = hit[0] if hit is not None else math.inf
            window = min(remaining, tc)
            Dp_line = None
            if thinning:
                tr = math.inf
                E = float(rng.exponential())
                te, Dp_line = _combined_arrival(target, x, v, lam, E, window, solver)
                tb = te if te is not None else math.inf
            else:
                tr = rng.exponential() / lam if lam > 0.0 else math.inf
                E = float(rng.exponential())
                te = bps_event_time(x, v, target, E, min(window, tr), solver)
                tb = te if te is not None else math.inf

            t_next, kind = remaining, END
            if tr < t_next:
                t_next, kind = tr, REFRESH
            if tb < t_next:
                t_next, kind = tb, BOUNCE
            if tc < math.inf and (tc < t_next or (kind == BOUNCE and tc <= t_next + BOUNDARY_TIE)):
                t_next, kind = tc, BOUNDARY

            x = x + t_next * v
            remaining -= t_next
            if kind == END:
                break
            if kind == BOUNCE:
                if thinning and lam > 0.0:
                    rate_tar = max(Dp_line(t_next), 0.0)
                    if rng.random() < lam / (rate_tar + lam):
                        v = rng.standard_normal(d)
                        refresh_total += 1
                    else:
                        v = reflect(v, target.gradient(x))
                        bounce_total += 1
                else:
                    v = reflect(v, target.gradient(x))
                    bounce_total += 1
            elif kind == REFRESH:
                v = rng.standard_normal(d)
                refresh_total += 1
            else:  # boundary
                v = reflect(v, hit[1].normal)
            n_events += 1
            if n_events > solver.max_events:
                raise EventStorm("event budget exceeded in one sampling window")
        event_counts[i] = n_events
        if i % thin == 0:
            stored.append(x.copy())
    wall = time.perf_counter() - t_start
    return Chain(
        samples=np.asarray(stored),
        wall_seconds=wall,
        event_counts=event_counts,
        meta={
            "sampler": "bps",
            "refresh_rate": lam,
            "total_time": config.total_time,
            "refresh_mode": config.refresh_mode,
            "seed": rng_seed,
            "thin": thin,
            "bounce_events": bounce_total,
            "refresh_events": refresh_total,
        },
    )
