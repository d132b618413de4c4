"""Exactly solvable surrogate flows: flat (linear) and isotropic quadratic."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .core import SurrogateFlow


def linear_flow(t: float, x: np.ndarray, v: np.ndarray):
    """Free flight: x_t = x + t v, v_t = v.  Valid for negative t."""
    return x + t * v, v


def _zero_potential(x: np.ndarray) -> float:
    return 0.0


def _zero_gradient(x: np.ndarray) -> np.ndarray:
    return np.zeros_like(x)


def linear() -> SurrogateFlow:
    """Flat surrogate potential; the flow underlying the bouncy BPS analogue."""
    return SurrogateFlow(
        potential=_zero_potential,
        gradient=_zero_gradient,
        flow=linear_flow,
        kind="linear",
    )


def harmonic_flow(
    t: float,
    x: np.ndarray,
    v: np.ndarray,
    center: Optional[np.ndarray] = None,
    omega: float = 1.0,
):
    """Rotation in phase space under the potential omega^2 ||x - center||^2 / 2.

    The angle is reduced modulo one period before the trig evaluation so the
    flow stays accurate for large |t|.
    """
    period = 2.0 * math.pi / omega
    t = math.fmod(t, period)
    angle = omega * t
    c, s = math.cos(angle), math.sin(angle)
    y = x if center is None else x - center
    xt = y * c + (v / omega) * s
    vt = -omega * y * s + v * c
    if center is not None:
        xt = xt + center
    return xt, vt


def harmonic(center=None, omega: float = 1.0) -> SurrogateFlow:
    """Isotropic quadratic surrogate with closed-form periodic flow."""
    if omega <= 0.0:
        raise ValueError("omega must be positive")
    c = None if center is None else np.asarray(center, dtype=float)

    def potential(x: np.ndarray) -> float:
        y = x if c is None else x - c
        return 0.5 * omega * omega * float(np.dot(y, y))

    def gradient(x: np.ndarray) -> np.ndarray:
        y = x if c is None else x - c
        return omega * omega * y

    def flow(t: float, x: np.ndarray, v: np.ndarray):
        return harmonic_flow(t, x, v, center=c, omega=omega)

    return SurrogateFlow(potential=potential, gradient=gradient, flow=flow, kind="harmonic")


def from_name(name: str, **kwargs) -> SurrogateFlow:
    """Build a surrogate flow from its config name."""
    if name == "linear":
        return linear()
    if name == "harmonic":
        return harmonic(center=kwargs.get("center"), omega=kwargs.get("omega", 1.0))
    raise ValueError(f"unknown surrogate {name!r}")
