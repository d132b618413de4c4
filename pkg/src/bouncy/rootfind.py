"""Scalar first-passage solvers used for event-time equations.

All solvers work on a "depletion" function f with f(0) <= 0 and look for the
smallest t in (0, horizon] with f(t) = 0, interpreted as a first passage:
crossings are approached from below.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

from .errors import DegenerateStart, NotLogConcave, RootBracketFailure

EPS_TIME = 1e-12
EPS_INERTIA = 1e-10
EPS_GRADIENT = 1e-14
MAX_SCAN_STEPS = 200_000


def polish_root(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    lo: float,
    hi: float,
    flo: float,
    fhi: float,
    tol: float,
    max_iter: int = 100,
) -> float:
    """Safeguarded Newton on a bracket [lo, hi] with f(lo) < 0 <= f(hi).

    Newton steps that leave the bracket fall back to bisection.  Returns the
    abscissa once |f| <= tol or the bracket width is at rounding level.
    """
    if not (flo < 0.0 <= fhi):
        raise RootBracketFailure(
            f"invalid bracket: f({lo})={flo}, f({hi})={fhi}"
        )
    t = 0.5 * (lo + hi)
    for _ in range(max_iter):
        ft = f(t)
        if abs(ft) <= tol:
            return t
        if ft < 0.0:
            lo = t
        else:
            hi = t
        width = hi - lo
        if width <= 4.0 * math.ulp(hi):
            return hi
        d = fprime(t)
        if d != 0.0:
            step = ft / d
            cand = t - step
            if lo < cand < hi:
                t = cand
                continue
        t = 0.5 * (lo + hi)
    # Newton stalled; accept the upper bracket end (first-passage side).
    if abs(f(hi)) > 100.0 * tol and hi - lo > 1e-9 * max(1.0, abs(hi)):
        raise RootBracketFailure(
            f"polisher failed to converge on [{lo}, {hi}]"
        )
    return hi


def scan_first_passage(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    horizon: float,
    step: float,
    tol: float,
    start: float = EPS_TIME,
) -> Optional[float]:
    """Grid scan followed by polishing, for a general depletion function.

    Walks t in increments of `step` from `start` until f changes sign, then
    polishes the bracket.  Returns None when no crossing is found in
    (start, horizon].
    """
    if horizon <= start:
        return None
    t_lo = start
    f_lo = f(t_lo)
    if f_lo >= 0.0:
        return t_lo
    n = 0
    t = min(t_lo + step, horizon)
    while True:
        ft = f(t)
        if ft >= 0.0:
            return polish_root(f, fprime, t_lo, t, f_lo, ft, tol)
        if t >= horizon:
            return None
        t_lo, f_lo = t, ft
        t = min(t + step, horizon)
        n += 1
        if n > MAX_SCAN_STEPS:
            raise RootBracketFailure("scan budget exceeded before the horizon")


def _guarded_curvature(fpp: Callable[[float], float], tol: float):
    def wrapped(t: float) -> float:
        c = fpp(t)
        if c < -tol:
            raise NotLogConcave(f"curvature {c} at t={t}")
        return c

    return wrapped


def convex_first_passage(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    fpp: Callable[[float], float],
    horizon: float,
    tol: float,
    max_iter: int = 50,
    curvature_tol: float = 1e-8,
) -> Optional[float]:
    """First passage of a convex depletion function f with f(0) <= 0.

    Exploits convexity: if f'(0) > 0 the root is solved directly; otherwise
    the minimum of f is located first (single crossing of f') and the root is
    solved on the increasing branch.  Raises NotLogConcave when negative
    curvature beyond `curvature_tol` is observed.
    """
    if horizon <= 0.0:
        return None
    fpp = _guarded_curvature(fpp, curvature_tol)
    f0 = f(0.0)
    d0 = fprime(0.0)
    if f0 >= -EPS_INERTIA and d0 > EPS_GRADIENT:
        return 0.0
    fh = f(horizon)
    if fh < 0.0:
        # Convexity: the maximum over [0, horizon] sits at an endpoint.
        return None
    if d0 > 0.0:
        lo, flo = 0.0, f0
    else:
        t_min = _convex_argmin(fprime, fpp, horizon, tol, max_iter)
        lo, flo = t_min, f(t_min)
        if flo >= 0.0:
            # Only possible through rounding right at the start; treat the
            # crossing as immediate.
            return lo
    # Newton from a local quadratic guess, safeguarded by the bracket.
    hi, fhi = horizon, fh
    curv = max(fpp(lo), 0.0)
    if curv > 0.0:
        guess = lo + math.sqrt(2.0 * (-flo) / curv)
    else:
        guess = 0.5 * (lo + hi)
    t = min(max(guess, lo), hi)
    for _ in range(max_iter):
        ft = f(t)
        if abs(ft) <= tol:
            return t
        if ft < 0.0:
            lo = t
        else:
            hi = t
        d = fprime(t)
        if d > 0.0:
            cand = t - ft / d
            if lo < cand < hi:
                t = cand
                continue
        t = 0.5 * (lo + hi)
        if hi - lo <= 4.0 * math.ulp(hi):
            return hi
    return polish_root(f, fprime, lo, hi, f(lo), f(hi), tol)


def _convex_argmin(
    fprime: Callable[[float], float],
    fpp: Callable[[float], float],
    horizon: float,
    tol: float,
    max_iter: int,
) -> float:
    """Root of f' on [0, horizon], assuming f'(0) <= 0 < f'(horizon)."""
    lo, hi = 0.0, horizon
    flo, fhi = fprime(lo), fprime(hi)
    if flo > 0.0:
        return 0.0
    if fhi <= 0.0:
        # Caller guarantees f(horizon) >= 0 > f(0), impossible for convex f
        # with f' <= 0 throughout; numerical inconsistency.
        raise RootBracketFailure("derivative never turns positive before horizon")
    t = 0.5 * (lo + hi)
    for _ in range(max_iter):
        d = fprime(t)
        if abs(d) <= tol:
            return t
        if d < 0.0:
            lo = t
        else:
            hi = t
        c = fpp(t)
        if c > 0.0:
            cand = t - d / c
            if lo < cand < hi:
                t = cand
                continue
        t = 0.5 * (lo + hi)
        if hi - lo <= 4.0 * math.ulp(hi):
            return t
    return t


def adaptive_scan_step(horizon: float, grad_norm: float, speed: float) -> float:
    """Default scan increment, shrinking where depletion can change fast."""
    return min(0.1 * horizon, 1.0 / (1.0 + grad_norm * speed))


def check_start(p: float, directional: float) -> None:
    """Reject the measure-zero start where the dynamics are ill-defined.

    With no inertia left and a flat directional derivative, a bounce neither
    occurs cleanly nor can be skipped.
    """
    if p <= EPS_INERTIA and abs(directional) <= EPS_GRADIENT:
        raise DegenerateStart(
            "zero inertia with vanishing directional derivative"
        )
