"""Target models with analytic gradients and line restrictions.

Every built-in target exposes:
  dim             parameter dimension
  potential(x)    negative log density up to a constant
  gradient(x)     its gradient
  line_potential(x, v) -> (g, g', g'') of t |-> potential(x + t v)
  log_concave     whether the potential is convex along every line
  constraints     tuple of LinearConstraint (possibly empty)

Line restrictions let the samplers solve event times with Newton iterations
instead of generic scanning.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyFile, Infeasible, ParseError, Unsupported

EPS_CONSTRAINT = 1e-10


@dataclass(frozen=True)
class LinearConstraint:
    """Half-space constraint {x : a^T x >= b}."""

    normal: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.normal, dtype=float)
        if float(np.linalg.norm(a)) <= 0.0:
            raise ValueError("constraint normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))

    def margin(self, x: np.ndarray) -> float:
        return float(np.dot(self.normal, x)) - self.offset


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class GaussianTarget:
    """Gaussian potential (x - mu)^T Lambda (x - mu) / 2.

    Parameterized by a lower-triangular factor L of the precision
    Lambda = L L^T, so the potential can be evaluated as half a squared norm.
    """

    log_concave = True

    def __init__(self, precision_factor, mean=None, constraints: Sequence[LinearConstraint] = ()):
        L = np.atleast_2d(np.asarray(precision_factor, dtype=float))
        self.precision_factor = L
        self.precision = L @ L.T
        self.dim = L.shape[0]
        self.mean = (
            np.zeros(self.dim) if mean is None else np.asarray(mean, dtype=float)
        )
        self.constraints = tuple(constraints)

    @classmethod
    def from_covariance(cls, covariance, mean=None, constraints=()):
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        precision = np.linalg.inv(cov)
        # Symmetrize before factoring; inv can lose symmetry at rounding level.
        precision = 0.5 * (precision + precision.T)
        return cls(np.linalg.cholesky(precision), mean=mean, constraints=constraints)

    @classmethod
    def isotropic(cls, dim: int, mean=None, constraints=()):
        return cls(np.eye(dim), mean=mean, constraints=constraints)

    @property
    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.precision)

    def potential(self, x: np.ndarray) -> float:
        z = self.precision_factor.T @ (x - self.mean)
        return 0.5 * float(np.dot(z, z))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.precision @ (x - self.mean)

    def line_potential(self, x, v):
        y = x - self.mean
        a = float(v @ self.precision @ v)
        b = float(v @ self.precision @ y)
        c = self.potential(x)
        return (
            lambda t: c + b * t + 0.5 * a * t * t,
            lambda t: b + a * t,
            lambda t: a,
        )


class LogisticRegressionTarget:
    """Bayesian logistic regression on the preconditioned coefficient scale.

    Potential: sum_i [log(1 + exp(x_i^T b)) - y_i x_i^T b] + ||b||^2/(2 s^2).
    Strictly convex for finite prior scale s; s=None or inf drops the prior.
    """

    log_concave = True

    def __init__(self, design, labels, prior_scale: Optional[float] = 1.0,
                 constraints: Sequence[LinearConstraint] = ()):
        X = np.atleast_2d(np.asarray(design, dtype=float))
        y = np.asarray(labels, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError("design and labels disagree on the number of rows")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("labels must be 0/1")
        self.design = X
        self.labels = y
        self.dim = X.shape[1]
        if prior_scale is None or math.isinf(prior_scale):
            self._prior_prec = 0.0
        else:
            self._prior_prec = 1.0 / (prior_scale * prior_scale)
        self.constraints = tuple(constraints)

    def potential(self, x: np.ndarray) -> float:
        z = self.design @ x
        val = float(np.sum(np.logaddexp(0.0, z)) - np.dot(self.labels, z))
        return val + 0.5 * self._prior_prec * float(np.dot(x, x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        z = self.design @ x
        return self.design.T @ (_sigmoid(z) - self.labels) + self._prior_prec * x

    def line_potential(self, x, v):
        z = self.design @ x
        w = self.design @ v
        yw = float(np.dot(self.labels, w))
        yz = float(np.dot(self.labels, z))
        pp = self._prior_prec
        xx = float(np.dot(x, x))
        xv = float(np.dot(x, v))
        vv = float(np.dot(v, v))

        def g(t: float) -> float:
            return (
                float(np.sum(np.logaddexp(0.0, z + t * w)))
                - (yz + t * yw)
                + 0.5 * pp * (xx + 2.0 * t * xv + t * t * vv)
            )

        def gp(t: float) -> float:
            return (
                float(np.dot(w, _sigmoid(z + t * w)))
                - yw
                + pp * (xv + t * vv)
            )

        def gpp(t: float) -> float:
            s = _sigmoid(z + t * w)
            return float(np.dot(w * w, s * (1.0 - s))) + pp * vv

        return g, gp, gpp


class TruncatedGaussianTarget:
    """Gaussian restricted to the orthant {sign(x) = signs}."""

    log_concave = True

    def __init__(self, base: GaussianTarget, signs):
        signs = np.asarray(signs, dtype=float)
        if signs.shape != (base.dim,) or not np.all(np.abs(signs) == 1.0):
            raise ValueError("signs must be a +-1 vector matching the dimension")
        self.base = base
        self.signs = signs
        self.dim = base.dim
        cons = []
        for i, s in enumerate(signs):
            normal = np.zeros(base.dim)
            normal[i] = s
            cons.append(LinearConstraint(normal, 0.0))
        self.constraints = tuple(cons) + tuple(base.constraints)

    def potential(self, x: np.ndarray) -> float:
        return self.base.potential(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.base.gradient(x)

    def line_potential(self, x, v):
        return self.base.line_potential(x, v)


class MixtureTarget:
    """One-dimensional Gaussian mixture; deliberately not log-concave
    when the component means are separated."""

    log_concave = False
    dim = 1
    constraints = ()

    def __init__(self, components):
        comps = [(float(w), float(m), float(s2)) for w, m, s2 in components]
        wsum = sum(w for w, _, _ in comps)
        if wsum <= 0.0 or any(w < 0.0 for w, _, _ in comps):
            raise ValueError("weights must be nonnegative and sum > 0")
        if any(s2 <= 0.0 for _, _, s2 in comps):
            raise ValueError("variances must be positive")
        self.weights = np.array([w / wsum for w, _, _ in comps])
        self.means = np.array([m for _, m, _ in comps])
        self.variances = np.array([s2 for _, _, s2 in comps])
        self._log_norm = np.log(self.weights) - 0.5 * np.log(
            2.0 * math.pi * self.variances
        )

    def _log_terms(self, x: float) -> np.ndarray:
        return self._log_norm - 0.5 * (x - self.means) ** 2 / self.variances

    def log_density(self, x: float) -> float:
        lt = self._log_terms(x)
        m = float(np.max(lt))
        return m + math.log(float(np.sum(np.exp(lt - m))))

    def density(self, x: float) -> float:
        return math.exp(self.log_density(x))

    def potential(self, x) -> float:
        return -self.log_density(float(np.asarray(x).ravel()[0]))

    def _derivatives(self, x: float):
        lt = self._log_terms(x)
        m = float(np.max(lt))
        r = np.exp(lt - m)
        r /= float(np.sum(r))  # responsibilities
        pull = (x - self.means) / self.variances
        d1 = float(np.sum(r * pull))  # U'
        # U'' = -p''/p + (p'/p)^2 with p''/p = E_r[pull^2 - 1/var]
        ppp = float(np.sum(r * (pull * pull - 1.0 / self.variances)))
        d2 = -ppp + d1 * d1
        return d1, d2

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        d1, _ = self._derivatives(float(x[0]))
        return np.array([d1])

    def line_potential(self, x, v):
        x0 = float(np.asarray(x).ravel()[0])
        v0 = float(np.asarray(v).ravel()[0])

        def g(t: float) -> float:
            return self.potential(np.array([x0 + t * v0]))

        def gp(t: float) -> float:
            d1, _ = self._derivatives(x0 + t * v0)
            return v0 * d1

        def gpp(t: float) -> float:
            _, d2 = self._derivatives(x0 + t * v0)
            return v0 * v0 * d2

        return g, gp, gpp


def line_potential(target, x: np.ndarray, v: np.ndarray):
    """Closed-form restriction of the target potential to the line x + t v."""
    fn = getattr(target, "line_potential", None)
    if fn is None:
        raise Unsupported(
            f"{type(target).__name__} does not provide a line restriction"
        )
    return fn(np.asarray(x, dtype=float), np.asarray(v, dtype=float))


def check_feasible(constraints, x: np.ndarray, eps: float = EPS_CONSTRAINT) -> None:
    for c in constraints:
        if c.margin(x) < -eps:
            raise Infeasible(
                f"constraint violated by {-c.margin(x):.3e} at the start position"
            )


def boundary_hit(
    constraints: Sequence[LinearConstraint], x: np.ndarray, v: np.ndarray
) -> Optional[tuple[float, LinearConstraint]]:
    """Earliest boundary crossing along the straight line x + t v.

    Only faces the velocity points out of (a^T v < 0) can be hit.  Returns
    None when the motion stays feasible forever.
    """
    check_feasible(constraints, x)
    best: Optional[tuple[float, LinearConstraint]] = None
    for c in constraints:
        av = float(np.dot(c.normal, v))
        if av >= 0.0:
            continue
        t = max(c.margin(x), 0.0) / (-av)
        if best is None or t < best[0]:
            best = (t, c)
    return best


def load_design_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a regression design with header row y,x1,...,xd.

    Rejects non-numeric cells, NaN/Inf, and labels outside {0, 1}; errors
    carry the offending row and column.
    """
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise EmptyFile(f"{path}: no content")
    header = [cell.strip() for cell in rows[0]]
    d = len(header) - 1
    expected = ["y"] + [f"x{i + 1}" for i in range(d)]
    if d < 1 or header != expected:
        raise ParseError(f"{path}: header must be y,x1,...,xd, got {header}")
    if len(rows) == 1:
        raise EmptyFile(f"{path}: header only, no data rows")
    labels = np.empty(len(rows) - 1)
    design = np.empty((len(rows) - 1, d))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != d + 1:
            raise ParseError(f"{path}: row {i}: expected {d + 1} fields, got {len(row)}")
        vals = []
        for j, cell in enumerate(row, start=1):
            try:
                val = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {i}, column {j}: not a number: {cell!r}")
            if not math.isfinite(val):
                raise ParseError(f"{path}: row {i}, column {j}: non-finite value")
            vals.append(val)
        if vals[0] not in (0.0, 1.0):
            raise ParseError(f"{path}: row {i}, column 1: label must be 0 or 1")
        labels[i - 2] = vals[0]
        design[i - 2] = vals[1:]
    return design, labels
