"""Generic bouncy Hamiltonian dynamics engine.

The engine advances a position/velocity pair along an exactly solvable
surrogate flow while an auxiliary nonnegative inertia depletes at the rate at
which the discrepancy potential (target minus surrogate) increases.  When the
inertia hits zero the velocity reflects elastically against the discrepancy
gradient and the inertia restarts from zero.  The resulting map is
deterministic, time-reversible, volume preserving and conserves the augmented
energy U_tar(x) + ||v||^2/2 + p, which is what makes it usable as a
rejection-free proposal.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rootfind
from .chains import Chain, chain_rng
from .errors import DegenerateStart, EventStorm, ZeroGradient

EPS_GRADIENT = rootfind.EPS_GRADIENT
EPS_INERTIA = rootfind.EPS_INERTIA
EPS_TIME = rootfind.EPS_TIME
MAX_EVENTS = 1_000_000

BOUNCE = "bounce"
BOUNDARY = "boundary"
REFRESH = "refresh"
END = "end"


@dataclass
class AugmentedState:
    """Position, velocity and inertia triple living in R^{2d+1}."""

    x: np.ndarray
    v: np.ndarray
    p: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.p = float(self.p)
        if self.x.shape != self.v.shape:
            raise ValueError("position and velocity must have the same shape")
        if self.p < 0.0:
            raise ValueError("inertia must be nonnegative")

    def copy(self) -> "AugmentedState":
        return AugmentedState(self.x.copy(), self.v.copy(), self.p)


@dataclass(frozen=True)
class SurrogateFlow:
    """A surrogate potential together with its exact solution operator.

    `flow(t, x, v)` returns the state reached after time t under Hamiltonian
    dynamics with potential `potential` and kinetic energy ||v||^2/2.  The
    `kind` tag lets specialized samplers recognize flows they can solve in
    closed form ("linear", "harmonic"); anything else is treated generically.
    """

    potential: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    flow: Callable[[float, np.ndarray, np.ndarray], tuple]
    kind: str = "custom"


@dataclass(frozen=True)
class EventRecord:
    """One trajectory event, retained for diagnostics."""

    time: float
    kind: str
    gradient_at_event: Optional[np.ndarray] = None


class Discrepancy:
    """The difference potential between target and surrogate."""

    def __init__(self, flow: SurrogateFlow, target):
        self._flow = flow
        self._target = target

    def value(self, x: np.ndarray) -> float:
        return float(self._target.potential(x)) - float(self._flow.potential(x))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._target.gradient(x)) - np.asarray(
            self._flow.gradient(x)
        )


def reflect(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Elastic reflection of v against the hyperplane orthogonal to g.

    Norm preserving and involutive.  Raises ZeroGradient when ||g|| is below
    rounding level, the degeneracy excluded by the validity theorem.
    """
    g = np.asarray(g, dtype=float)
    nsq = float(np.dot(g, g))
    if nsq <= EPS_GRADIENT * EPS_GRADIENT:
        raise ZeroGradient("cannot reflect against a zero gradient")
    return v - (2.0 * float(np.dot(v, g)) / nsq) * g


def inertia_at(
    t: float, state0: AugmentedState, flow: SurrogateFlow, target
) -> float:
    """Inertia after flowing for time t with no intervening bounce.

    Uses the potential-difference form p0 + U_d(x_0) - U_d(x_t), which is
    exact for any flow that conserves the surrogate energy.  The result may
    be negative; callers interpret that as depletion.
    """
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    ud = Discrepancy(flow, target)
    xt, _ = flow.flow(t, state0.x, state0.v)
    return state0.p + ud.value(state0.x) - ud.value(xt)


def bounce_time(
    state0: AugmentedState,
    flow: SurrogateFlow,
    target,
    horizon: float,
    scan_step: Optional[float] = None,
    tol: float = 1e-10,
) -> Optional[float]:
    """First time in (0, horizon] at which the inertia runs out.

    Solves U_d(x_t) - U_d(x_0) = p_0 as a first passage by scanning for a
    sign change and polishing with safeguarded Newton.  Returns None when the
    inertia survives the whole window.  Returns 0.0 when the inertia is
    already exhausted and still depleting, which callers treat as an
    immediate bounce.
    """
    ud = Discrepancy(flow, target)
    x0, v0, p0 = state0.x, state0.v, state0.p
    g0 = ud.grad(x0)
    d0 = float(np.dot(v0, g0))
    rootfind.check_start(p0, d0)
    if p0 <= EPS_INERTIA and d0 > EPS_GRADIENT:
        return 0.0
    u0 = ud.value(x0)

    def f(t: float) -> float:
        xt, _ = flow.flow(t, x0, v0)
        return ud.value(xt) - u0 - p0

    def fprime(t: float) -> float:
        xt, vt = flow.flow(t, x0, v0)
        return float(np.dot(vt, ud.grad(xt)))

    if scan_step is None:
        scan_step = rootfind.adaptive_scan_step(
            horizon, float(np.linalg.norm(g0)), float(np.linalg.norm(v0))
        )
    return rootfind.scan_first_passage(f, fprime, horizon, scan_step, tol)


def simulate(
    T: float,
    state0: AugmentedState,
    flow: SurrogateFlow,
    target,
    record_events: bool = True,
    max_events: int = MAX_EVENTS,
    scan_step: Optional[float] = None,
    tol: float = 1e-10,
) -> tuple[AugmentedState, list[EventRecord]]:
    """Advance the bouncy dynamics for total trajectory time T.

    Alternates surrogate-flow segments with bounce events; when the target
    declares constraints the work is delegated to the constrained linear-flow
    engine.  The augmented energy is conserved along the whole trajectory up
    to the bounce solver tolerance.
    """
    if T <= 0.0:
        raise ValueError("T must be positive")
    if getattr(target, "constraints", None):
        from .hbps import constrained_simulate

        return constrained_simulate(
            T, state0, target, record_events=record_events, max_events=max_events
        )

    ud = Discrepancy(flow, target)
    x, v, p = state0.x.copy(), state0.v.copy(), state0.p
    tau = 0.0
    events: list[EventRecord] = []
    n_events = 0
    while True:
        remaining = T - tau
        if remaining <= 0.0:
            break
        state = AugmentedState(x, v, p)
        ts = bounce_time(state, flow, target, remaining, scan_step=scan_step, tol=tol)
        if ts is None:
            u_before = ud.value(x)
            x, v = flow.flow(remaining, x, v)
            p = p - (ud.value(x) - u_before)
            tau = T
            break
        # Advance to the bounce point, reflect, and restart the inertia.
        if ts > 0.0:
            u_before = ud.value(x)
            x, v = flow.flow(ts, x, v)
        g = ud.grad(x)
        v = reflect(v, g)
        p = 0.0
        tau += ts
        n_events += 1
        if n_events > max_events:
            raise EventStorm(f"more than {max_events} events in one trajectory")
        if record_events:
            events.append(EventRecord(tau, BOUNCE, g))
    return AugmentedState(x, v, max(p, 0.0) if abs(p) < EPS_INERTIA else p), events


def sample(
    n: int,
    T: float,
    x0: np.ndarray,
    flow: SurrogateFlow,
    target,
    rng_seed: int,
    thin: int = 1,
) -> Chain:
    """Run the bouncy Hamiltonian sampler for n iterations.

    Each iteration refreshes v ~ N(0, I) and p ~ Exp(1), simulates the
    dynamics for time T and keeps the final position.  Proposals are
    rejection-free, so every iteration moves.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if T <= 0.0:
        raise ValueError("T must be positive")
    x = np.asarray(x0, dtype=float).copy()
    d = x.shape[0]
    rng = chain_rng(rng_seed)
    stored = []
    event_counts = np.zeros(n, dtype=np.int64)
    t_start = time.perf_counter()
    for i in range(n):
        v = rng.standard_normal(d)
        p = float(rng.exponential())
        state, events = simulate(
            T, AugmentedState(x, v, p), flow, target, record_events=True
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
        meta={"sampler": "core", "travel_time": T, "seed": rng_seed, "thin": thin},
    )
