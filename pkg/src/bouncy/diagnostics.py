"""Effective sample size via the AR spectral density at frequency zero."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .chains import Chain
from .errors import DegenerateSeries

MAX_AR_ORDER = 50


def ess(series) -> float:
    """ESS = n * var / S(0), with S(0) from an AIC-selected AR fit.

    Mirrors the usual spectral estimator: autoregressive coefficients are
    computed by Levinson-Durbin up to order min(50, n/10), the order is
    picked by AIC, and the spectral density at zero is
    sigma_resid^2 / (1 - sum(phi))^2.  The result is clamped to (0, n].
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 100:
        raise ValueError("need at least 100 points to estimate ESS")
    var = float(np.var(x, ddof=1))
    if var < 1e-300:
        raise DegenerateSeries("series variance is numerically zero")
    d = x - x.mean()
    pmax = min(MAX_AR_ORDER, n // 10)
    acov = np.array([float(np.dot(d[: n - k], d[k:])) / n for k in range(pmax + 1)])

    # Levinson-Durbin, tracking the AIC-best order.
    sigma2 = acov[0]
    best_aic = n * math.log(sigma2) + 0.0
    best_sigma2 = sigma2
    best_phi_sum = 0.0
    a = np.zeros(pmax + 1)
    for p in range(1, pmax + 1):
        k = (acov[p] - float(np.dot(a[1:p], acov[p - 1 : 0 : -1]))) / sigma2
        new_a = a.copy()
        new_a[p] = k
        new_a[1:p] = a[1:p] - k * a[p - 1 : 0 : -1]
        a = new_a
        sigma2 *= 1.0 - k * k
        if sigma2 <= 0.0:
            break
        aic = n * math.log(sigma2) + 2.0 * p
        if aic < best_aic:
            best_aic = aic
            best_sigma2 = sigma2
            best_phi_sum = float(np.sum(a[1 : p + 1]))
    denom = (1.0 - best_phi_sum) ** 2
    if denom <= 0.0:
        return 1.0
    spec0 = best_sigma2 / denom
    out = n * var / spec0
    return float(min(max(out, 1e-12), n))


def min_ess_report(
    chain: Chain, dims: Optional[Sequence[int]] = None
) -> tuple[float, int, float]:
    """Per-dimension ESS reduced to (min, argmin dimension, min-ESS/second)."""
    samples = np.atleast_2d(chain.samples)
    if samples.shape[0] == 0:
        raise ValueError("empty chain")
    cols = range(samples.shape[1]) if dims is None else dims
    values = {j: ess(samples[:, j]) for j in cols}
    argmin_dim = min(values, key=values.get)
    min_ess = values[argmin_dim]
    per_second = min_ess / chain.wall_seconds if chain.wall_seconds > 0 else math.inf
    return min_ess, int(argmin_dim), per_second
