"""Factorized bouncy dynamics: one inertia per factor, restricted bounces.

Each factor owns a depletion clock driven by its own contribution to the
directional derivative; the factor whose inertia runs out first bounces the
velocity against its own gradient (touching only its coordinates) and resets
to zero while every other clock keeps its accumulated depletion.  A single
global factor recovers the standard dynamics; coordinate singleton factors
with the flat surrogate give the zig-zag special case, whose univariate
version coincides with the linear-flow sampler exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import rootfind
from .chains import Chain, chain_rng
from .core import BOUNCE, EventRecord, SurrogateFlow, reflect
from .errors import EventStorm, Unsupported
from .hbps import DEFAULT_CONFIG, HbpsSolverConfig, _deplete, hbps_bounce_time
from .surrogates import linear
from .targets import GaussianTarget


def restricted_reflect(v: np.ndarray, grad_f: np.ndarray) -> np.ndarray:
    """Reflection against a factor gradient; components outside the factor's
    support are untouched because the gradient vanishes there."""
    return reflect(v, grad_f)


@dataclass(frozen=True)
class Factor:
    """One multiplicative factor of the target density.

    `gradient` returns a full-dimension vector supported on `indices`.  When
    the factor potential is only known through its gradient field (the
    zig-zag case on non-separable targets), `potential` is None and
    `line_potential` must supply an antiderivative of the depletion rate
    along a given ray.
    """

    indices: tuple[int, ...]
    gradient: Callable[[np.ndarray], np.ndarray]
    potential: Optional[Callable[[np.ndarray], float]] = None
    line_potential: Optional[Callable] = None
    log_concave: bool = False


def factors_from_potentials(specs) -> list[Factor]:
    """Build potential-backed factors from (indices, potential, gradient)."""
    out = []
    for indices, pot, grad in specs:
        out.append(
            Factor(
                indices=tuple(sorted(indices)),
                gradient=grad,
                potential=pot,
            )
        )
    return out


def coordinate_factors(target) -> list[Factor]:
    """The d singleton factors of the zig-zag decomposition.

    In one dimension the single factor is the target itself.  For Gaussian
    targets each coordinate slice of the gradient has a closed-form
    depletion along straight lines; other multivariate targets are not
    supported.
    """
    d = target.dim
    if d == 1:
        return [
            Factor(
                indices=(0,),
                gradient=target.gradient,
                potential=target.potential,
                line_potential=getattr(target, "line_potential", None),
                log_concave=getattr(target, "log_concave", False),
            )
        ]
    if not isinstance(target, GaussianTarget):
        raise Unsupported(
            "coordinate factors need a Gaussian target or dimension one"
        )
    factors = []
    precision = target.precision
    mean = target.mean
    for i in range(d):
        row = precision[i]

        def gradient(x, i=i, row=row):
            g = np.zeros_like(x)
            g[i] = row @ (x - mean)
            return g

        def line_pot(x, v, i=i, row=row):
            # Antiderivative of t -> v_i * (Lambda (x - mean + t v))_i.
            c1 = v[i] * float(row @ (x - mean))
            c2 = v[i] * float(row @ v)
            return (
                lambda t: c1 * t + 0.5 * c2 * t * t,
                lambda t: c1 + c2 * t,
                lambda t: c2,
            )

        factors.append(
            Factor(indices=(i,), gradient=gradient, line_potential=line_pot)
        )
    return factors


def _factor_bounce_time(factor, x, v, p, horizon, config, flow):
    if flow.kind == "linear" and factor.line_potential is not None:
        return hbps_bounce_time(x, v, p, factor, horizon, config)
    if flow.kind == "linear" and factor.potential is not None:
        return hbps_bounce_time(x, v, p, factor, horizon, config)
    if factor.potential is None:
        raise Unsupported("gradient-only factors require the linear flow")
    u0 = factor.potential(x)

    def f(t: float) -> float:
        xt, _ = flow.flow(t, x, v)
        return factor.potential(xt) - u0 - p

    def fp(t: float) -> float:
        xt, vt = flow.flow(t, x, v)
        return float(np.dot(vt, factor.gradient(xt)))

    d0 = fp(0.0)
    rootfind.check_start(p, d0)
    if p <= rootfind.EPS_INERTIA and d0 > rootfind.EPS_GRADIENT:
        return 0.0
    step = min(0.1 * horizon, 1.0 / (1.0 + abs(d0)))
    return rootfind.scan_first_passage(f, fp, horizon, step, config.newton_tol)


def local_simulate(
    T: float,
    x: np.ndarray,
    v: np.ndarray,
    factor_inertias,
    flow: SurrogateFlow,
    factors: Sequence[Factor],
    config: HbpsSolverConfig = DEFAULT_CONFIG,
    record_events: bool = True,
):
    """Advance the factorized dynamics for time T.

    Returns (x, v, inertias, events).  After every event all factor clocks
    are recomputed against the new ray; only the bouncing factor resets to
    zero, the others carry their partial depletion forward, which is what
    keeps U + ||v||^2/2 + sum_f p_f conserved.
    """
    if T <= 0.0:
        raise ValueError("T must be positive")
    x = np.asarray(x, dtype=float).copy()
    v = np.asarray(v, dtype=float).copy()
    inertias = np.asarray(factor_inertias, dtype=float).copy()
    if inertias.shape != (len(factors),):
        raise ValueError("need exactly one inertia per factor")
    if np.any(inertias < 0.0):
        raise ValueError("inertias must be nonnegative")
    events: list[EventRecord] = []
    tau = 0.0
    n_events = 0
    while True:
        remaining = T - tau
        if remaining <= 0.0:
            break
        t_star = None
        f_star = -1
        for k, f in enumerate(factors):
            tk = _factor_bounce_time(f, x, v, float(inertias[k]), remaining, config, flow)
            if tk is not None and (t_star is None or tk < t_star):
                t_star, f_star = tk, k
        if t_star is None:
            _advance_all(factors, flow, x, v, remaining, inertias, skip=-1)
            x, v = flow.flow(remaining, x, v)
            break
        _advance_all(factors, flow, x, v, t_star, inertias, skip=f_star)
        x, v = flow.flow(t_star, x, v)
        grad = factors[f_star].gradient(x)
        v = restricted_reflect(v, grad)
        inertias[f_star] = 0.0
        tau += t_star
        n_events += 1
        if n_events > config.max_events:
            raise EventStorm(f"more than {config.max_events} events in one trajectory")
        if record_events:
            events.append(EventRecord(tau, BOUNCE, grad))
    return x, v, inertias, events


def _advance_all(factors, flow, x, v, dt, inertias, skip):
    """Deplete every factor clock (except `skip`) over a segment of length dt."""
    for k, f in enumerate(factors):
        if k == skip:
            continue
        if f.potential is not None:
            u0 = f.potential(x)
            xt, _ = flow.flow(dt, x, v)
            inertias[k] = _deplete(float(inertias[k]), u0, f.potential(xt))
        else:
            g, _, _ = f.line_potential(x, v)
            inertias[k] = float(inertias[k]) - (g(dt) - g(0.0))


def zigzag_sample(
    n: int,
    T: float,
    x0: np.ndarray,
    target,
    rng_seed: int,
    config: HbpsSolverConfig = DEFAULT_CONFIG,
    thin: int = 1,
) -> Chain:
    """Zig-zag sampler: coordinate singleton factors, flat surrogate.

    In one dimension this reproduces the linear-flow sampler exactly (same
    draws, same solver, same arithmetic).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if T <= 0.0:
        raise ValueError("T must be positive")
    x = np.asarray(x0, dtype=float).copy()
    d = x.shape[0]
    factors = coordinate_factors(target)
    flow = linear()
    rng = chain_rng(rng_seed)
    stored = []
    event_counts = np.zeros(n, dtype=np.int64)
    t_start = time.perf_counter()
    for i in range(n):
        v = rng.standard_normal(d)
        inertias = rng.exponential(size=len(factors))
        x, _, _, events = local_simulate(
            T, x, v, inertias, flow, factors, config, record_events=True
        )
        event_counts[i] = len(events)
        if i % thin == 0:
            stored.append(x.copy())
    wall = time.perf_counter() - t_start
    return Chain(
        samples=np.asarray(stored),
        wall_seconds=wall,
        event_counts=event_counts,
        meta={"sampler": "hbps-local", "travel_time": T, "seed": rng_seed, "thin": thin},
    )
