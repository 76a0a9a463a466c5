"""Scalar numerics shared by the rest of the package.

Everything that holds a probability, weight or normalizing constant is kept
as a natural logarithm; the helpers here keep that representation exact
enough that values like 1e-59 (or far smaller) never touch underflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
_MAX_CF_ITER = 100_000


class NumericalError(ArithmeticError):
    """A numerical routine failed to produce a trustworthy value."""


# ---------------------------------------------------------------------------
# LogReal
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class LogReal:
    """A nonnegative real stored as its natural log; ``-inf`` encodes zero."""

    log_value: float

    def __post_init__(self):
        if math.isnan(self.log_value):
            raise NumericalError("LogReal cannot hold NaN")

    @classmethod
    def from_value(cls, value: float) -> "LogReal":
        if value < 0 or math.isnan(value):
            raise NumericalError(f"LogReal needs a nonnegative value, got {value!r}")
        return cls(math.log(value) if value > 0 else -math.inf)

    @classmethod
    def zero(cls) -> "LogReal":
        return cls(-math.inf)

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    def __add__(self, other: "LogReal") -> "LogReal":
        return LogReal(float(np.logaddexp(self.log_value, other.log_value)))

    def __mul__(self, other: "LogReal") -> "LogReal":
        a, b = self.log_value, other.log_value
        if a == -math.inf or b == -math.inf:
            return LogReal.zero()
        return LogReal(a + b)

    def __truediv__(self, other: "LogReal") -> "LogReal":
        if other.log_value == -math.inf:
            raise ZeroDivisionError("LogReal division by zero")
        if self.log_value == -math.inf:
            return LogReal.zero()
        return LogReal(self.log_value - other.log_value)

    def __pow__(self, k: float) -> "LogReal":
        if self.log_value == -math.inf:
            if k <= 0:
                raise NumericalError("0 ** k undefined for k <= 0")
            return LogReal.zero()
        return LogReal(self.log_value * k)


# ---------------------------------------------------------------------------
# Gamma-function family
# ---------------------------------------------------------------------------


def log_gamma(z: float) -> float:
    """ln Gamma(z) for z > 0."""
    if not z > 0:
        raise ValueError(f"log_gamma needs z > 0, got {z!r}")
    return math.lgamma(z)


def log_sum_exp(xs: Sequence[float] | np.ndarray) -> float:
    """log(sum(exp(xs))), shifted by the max element."""
    arr = np.asarray(xs, dtype=float)
    if arr.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    if np.isnan(arr).any():
        raise NumericalError("log_sum_exp received NaN")
    m = arr.max()
    if m == -np.inf:
        return -math.inf
    if m == np.inf:
        return math.inf
    return float(m + math.log(np.exp(arr - m).sum()))


def _log_prefactor(a: float, x: float) -> float:
    # ln(x^a e^-x / Gamma(a))
    return a * math.log(x) - x - math.lgamma(a)


def _log_lower_series(a: float, x: float) -> float:
    # P(a, x) = x^a e^-x / Gamma(a+1) * sum_k x^k / ((a+1)...(a+k))
    term = 1.0
    total = 1.0
    ap = a
    for _ in range(_MAX_CF_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if term < total * _EPS:
            return _log_prefactor(a, x) - math.log(a) + math.log(total)
    raise NumericalError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _log_upper_cf(a: float, x: float) -> float:
    # modified Lentz on the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_CF_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return _log_prefactor(a, x) + math.log(h)
    raise NumericalError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _check_inc_gamma_args(a: float, x: float) -> None:
    if not a > 0:
        raise ValueError(f"incomplete gamma needs a > 0, got {a!r}")
    if not x >= 0:
        raise ValueError(f"incomplete gamma needs x >= 0, got {x!r}")


def _log1mexp(t: float) -> float:
    """log(1 - exp(t)) for t <= 0."""
    if t > -math.log(2.0):
        return math.log(-math.expm1(t))
    return math.log1p(-math.exp(t))


def log_reg_lower_inc_gamma(a: float, x: float) -> float:
    """ln P(a, x), the regularized lower incomplete gamma, without underflow."""
    _check_inc_gamma_args(a, x)
    if x == 0:
        return -math.inf
    if x < a + 1.0:
        return _log_lower_series(a, x)
    return _log1mexp(_log_upper_cf(a, x))


def log_reg_upper_inc_gamma(a: float, x: float) -> float:
    """ln Q(a, x), the regularized upper incomplete gamma, without underflow."""
    _check_inc_gamma_args(a, x)
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return _log1mexp(_log_lower_series(a, x))
    return _log_upper_cf(a, x)


def reg_upper_inc_gamma(a: float, x: float) -> float:
    """Q(a, x) = Gamma(a, x) / Gamma(a); chi-square tail is Q(df/2, t/2)."""
    return math.exp(log_reg_upper_inc_gamma(a, x))


def reg_lower_inc_gamma(a: float, x: float) -> float:
    """P(a, x) = 1 - Q(a, x), computed from its own expansion."""
    return math.exp(log_reg_lower_inc_gamma(a, x))


# ---------------------------------------------------------------------------
# Quadrature with square-root edges
# ---------------------------------------------------------------------------

DEFAULT_NODES = 512


def _chebyshev_rule(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, nodes: int) -> float:
    # midpoint nodes in theta; sin^2 carries the weight, so endpoint poles of
    # f that the weight cancels (e.g. 1/y at a = 0) stay harmless
    theta = (np.arange(1, nodes + 1) - 0.5) * np.pi / nodes
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    y = c + h * np.cos(theta)
    vals = np.asarray(f(y), dtype=float)
    if vals.shape != y.shape:
        vals = np.broadcast_to(vals, y.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericalError(f"integrand not finite at node y={y[i]!r} (value {vals[i]!r})")
    w = (np.pi / nodes) * np.sin(theta) ** 2
    return float(h * h * np.dot(w, vals))


def quad_sqrt_edge(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    nodes: int = DEFAULT_NODES,
    check: bool = True,
    tol: float = 1e-10,
) -> float:
    """Integrate ``f(y) * sqrt((y - a)(b - y))`` over ``[a, b]``.

    Uses the substitution ``y = (a+b)/2 + (b-a)/2 cos(theta)`` and the
    midpoint rule in theta (Gauss-Chebyshev of the first kind applied to
    ``f(y) (y-a)(b-y)``), so the square-root edges cost nothing and the rule
    converges spectrally for smooth ``f``. ``f`` must accept an array of
    nodes; it is never evaluated at the endpoints. With ``check`` the rule is re-run at twice the node count and
    the finer value is returned; a change above ``tol`` is logged.
    """
    if not a < b:
        raise ValueError(f"quad_sqrt_edge needs a < b, got [{a}, {b}]")
    coarse = _chebyshev_rule(f, a, b, nodes)
    if not check:
        return coarse
    fine = _chebyshev_rule(f, a, b, 2 * nodes + 1)
    if abs(fine - coarse) > tol * max(1.0, abs(fine)):
        log.warning(
            "quad_sqrt_edge: node doubling moved the result by %.3g (nodes=%d)",
            abs(fine - coarse),
            nodes,
        )
    return fine


# ---------------------------------------------------------------------------
# Monotone interpolation of tabulated CDFs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InterpTable:
    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
            raise ValueError("InterpTable needs two 1-d arrays of equal length >= 2")
        if not np.all(np.diff(knots) > 0):
            raise ValueError("InterpTable knots must be strictly increasing")
        if not np.all(np.diff(values) >= 0):
            raise ValueError("InterpTable values must be nondecreasing")
        if values[0] < 0 or values[-1] > 1:
            raise ValueError("InterpTable values must lie in [0, 1]")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_pchip", PchipInterpolator(knots, values, extrapolate=False))


def interp_cdf(table: InterpTable, s):
    """Shape-preserving cubic interpolation of a CDF table, clamped to [0, 1].

    Returns 0 below the first knot and 1 above the last. Accepts scalars or
    arrays.
    """
    s_arr = np.asarray(s, dtype=float)
    out = np.asarray(table._pchip(s_arr), dtype=float)
    out = np.where(s_arr < table.knots[0], 0.0, out)
    out = np.where(s_arr > table.knots[-1], 1.0, out)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out
