"""Closed-form tail approximations for the extreme beta-Laguerre eigenvalues.

All tail functions return natural-log probabilities. Products such as
``(p x)^{beta (p - n + 1) / 2}`` overflow long before the probability itself
underflows, so every formula is assembled term by term in log space.
"""

from __future__ import annotations

import enum
import functools
import hashlib
import importlib.resources
import math
import os
import types
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleParams
from .numerics import DEFAULT_NODES, InterpTable, NumericalError, interp_cdf, log_gamma, quad_sqrt_edge

LOG2 = math.log(2.0)


def _check_np(n: int, p: int, beta: float) -> None:
    if n < 0 or p < n or not beta > 0:
        raise ValueError(f"need p >= n >= 0 and beta > 0, got n={n}, p={p}, beta={beta}")


def log_c(n: int, p: int, beta: float) -> float:
    """ln of the normalizing constant of the unordered eigenvalue density.

    ``n = 0`` gives the empty product, 0.
    """
    _check_np(n, p, beta)
    if n == 0:
        return 0.0
    total = -(beta * n * p / 2.0) * LOG2
    lg_half = log_gamma(1.0 + beta / 2.0)
    for j in range(1, n + 1):
        total += lg_half - log_gamma(1.0 + beta * j / 2.0) - log_gamma(beta * (p - n + j) / 2.0)
    return total


def log_A(n: int, p: int, beta: float) -> float:
    """ln(c_{n,p,beta} / c_{n-1,p-1,beta}) in its closed three-Gamma form."""
    if n < 1 or p < n or not beta > 0:
        raise ValueError(f"need p >= n >= 1 and beta > 0, got n={n}, p={p}, beta={beta}")
    return (
        -(beta * (n + p - 1) / 2.0) * LOG2
        + log_gamma(1.0 + beta / 2.0)
        - log_gamma(1.0 + beta * n / 2.0)
        - log_gamma(beta * p / 2.0)
    )


def sharp_log_tail_max(params: EnsembleParams, x: float) -> float:
    """Sharp approximation of ln P(lambda_(1) > p x), valid for x > beta."""
    n, p, beta = params.n, params.p, params.beta
    if not x > beta:
        raise ValueError(f"sharp_log_tail_max needs x > beta, got x={x}, beta={beta}")
    return (
        math.log(n)
        + log_A(n, p, beta)
        + math.log(2.0 * x / (x - beta))
        + beta * (n - 1) * math.log(p * x - p * beta)
        + (beta * (p - n + 1) / 2.0 - 1.0) * math.log(p * x)
        - p * x / 2.0
        - beta**3 * n**2 / (2.0 * (x - beta) ** 2 * p)
    )


def _b_formula(n: int, p: int, beta: float, x: float) -> float:
    dist = abs(x - beta)
    if dist == 0 or x <= 0:
        raise ValueError(f"B(x) undefined at x={x} for beta={beta}")
    return (
        p * (beta / 2.0 - beta / 2.0 * math.log(beta) - x / 2.0 + beta / 2.0 * math.log(x))
        + beta * n / 2.0 * math.log(p / n)
        - (beta + 1.0) / 2.0 * math.log(p)
        + beta * n * (-math.log(x) / 2.0 + math.log(dist) - math.log(beta) / 2.0 + 0.5)
        + 0.5 * math.log(n)
        - beta**3 * n**2 / (2.0 * dist**2 * p)
        - (beta + 1.0) * math.log(dist)
        + beta / 2.0 * math.log(2.0 * x)
        - math.log(math.pi)
        + math.lgamma(1.0 + beta / 2.0)
    )


def b_rate(params: EnsembleParams, x: float) -> float:
    """The explicit exponent B_{n,p,beta}(x) with P(lambda_(1) > p x) ~ exp(B)."""
    if not x > params.beta:
        raise ValueError(f"b_rate needs x > beta, got x={x}, beta={params.beta}")
    return _b_formula(params.n, params.p, params.beta, x)


def b_leading_term(beta: float, x: float) -> float:
    """Per-p leading part of B: beta/2 - beta/2 ln beta - x/2 + beta/2 ln x."""
    return beta / 2.0 - beta / 2.0 * math.log(beta) - x / 2.0 + beta / 2.0 * math.log(x)


def log_tail_min(params: EnsembleParams, y: float) -> float:
    """Approximation of ln P(lambda_(n) < p y) for 0 < y < beta.

    Same exponent as the largest-eigenvalue case with |y - beta| in place of
    (x - beta).
    """
    if not 0 < y < params.beta:
        raise ValueError(f"log_tail_min needs 0 < y < beta, got y={y}, beta={params.beta}")
    return _b_formula(params.n, params.p, params.beta, y)


# ---------------------------------------------------------------------------
# Marchenko-Pastur law and the large-deviation rate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MPLaw:
    """Limiting spectral law of lambda/p when p/n -> gamma.

    Supported on ``[x_star, x_star_upper]`` with density
    ``sqrt((y - x_star)(x_star_upper - y)) / (2 pi beta y / gamma)``.
    """

    beta: float
    gamma: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.gamma >= 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def x_star(self) -> float:
        return self.beta * (1.0 - math.sqrt(1.0 / self.gamma)) ** 2

    @property
    def x_star_upper(self) -> float:
        return self.beta * (1.0 + math.sqrt(1.0 / self.gamma)) ** 2

    @classmethod
    def for_params(cls, params: EnsembleParams) -> "MPLaw":
        return cls(params.beta, params.gamma)

    def expect(self, g, nodes: int = DEFAULT_NODES) -> float:
        """Integral of ``g`` against the law (g vectorized over nodes).

        The 1/y factor of the density nearly has a pole at the lower edge
        when gamma is close to 1, so g(x_star)/y is integrated in closed form
        and only (g(y) - g(x_star))/y goes through the quadrature.
        """
        a, b = self.x_star, self.x_star_upper
        scale = self.gamma / (2.0 * math.pi * self.beta)
        g_a = float(np.asarray(g(np.array([a])), dtype=float).reshape(-1)[0])
        if not math.isfinite(g_a):
            return scale * quad_sqrt_edge(lambda y: g(y) / y, a, b, nodes)
        exact = 0.5 * math.pi * (math.sqrt(b) - math.sqrt(a)) ** 2
        rest = quad_sqrt_edge(lambda y: (g(y) - g_a) / y, a, b, nodes)
        return scale * (g_a * exact + rest)


def mp_density(law: MPLaw, y: float) -> float:
    lo, hi = law.x_star, law.x_star_upper
    if not lo <= y <= hi or y <= 0:
        return 0.0
    return math.sqrt(max((y - lo) * (hi - y), 0.0)) / (2.0 * math.pi * law.beta * y / law.gamma)


def _alpha(law: MPLaw) -> float:
    b, g = law.beta, law.gamma
    return b / 2.0 * ((g + 1.0) * (math.log(b) - 1.0) + g * math.log(g))


def ldp_rate(law: MPLaw, x: float, nodes: int = DEFAULT_NODES) -> float:
    """Large-deviation rate for lambda_(1)/n at level gamma*x.

    ``x`` is the threshold in P(lambda_(1) > p x); the rate governs
    P(lambda_(1) > p x) ~ exp(-n * rate). Returns +inf below the bulk edge
    ``x_star_upper`` and 0 at it. The log-potential is taken against the law
    of gamma*Y, Y ~ MP, which is the spectral law on the lambda/n scale.
    """
    if x < law.x_star_upper:
        return math.inf
    b, g = law.beta, law.gamma
    u = g * x
    potential = law.expect(lambda y: np.log(np.abs(u - g * y)), nodes)
    rate = -b * potential + u / 2.0 - b / 2.0 * (g - 1.0) * math.log(u) + _alpha(law)
    if rate < -1e-8:
        raise NumericalError(f"rate function negative ({rate!r}) at x={x}, law={law}")
    return max(rate, 0.0)


def j_rate_bound(law: MPLaw, x: float, nodes: int = DEFAULT_NODES) -> float:
    """Upper bound on the exponential tilting rate for the finite-gamma sampler.

    Equals the derivative of twice the rate function at gamma*x (on the
    lambda/n scale); positive for x beyond the bulk edge.
    """
    if not x > law.x_star_upper:
        raise ValueError(
            f"j_rate_bound needs x > x_star_upper = {law.x_star_upper:.6g}, got x={x}"
        )
    b, g = law.beta, law.gamma
    stieltjes = law.expect(lambda y: 1.0 / (g * x - g * y), nodes)
    bound = 1.0 - 2.0 * b * stieltjes - b * (g - 1.0) / (g * x)
    if not bound > 0:
        raise NumericalError(f"rate bound not positive ({bound!r}) at x={x}, law={law}")
    return bound


# ---------------------------------------------------------------------------
# Tracy-Widom approximation
# ---------------------------------------------------------------------------

TW_BETAS = (1, 2, 4)
TW_TABLE_RESOURCE = "tw_cdf.csv"


class UnsupportedBetaError(ValueError):
    """No Tracy-Widom table is available for this beta."""


class Centering(str, enum.Enum):
    CLASSIC = "classic"
    REFINED = "refined"


@dataclass(frozen=True, eq=False)
class TWTable:
    """One monotone CDF table per beta in {1, 2, 4}; read-only after load."""

    tables: dict
    sha256: str = ""
    source: str = ""

    def __post_init__(self):
        for b, t in self.tables.items():
            if b not in TW_BETAS:
                raise ValueError(f"unexpected beta {b} in TW table")
            if t.knots[0] > -10.0 or t.knots[-1] < 6.0:
                raise ValueError(f"TW table for beta={b} must span at least [-10, 6]")
        object.__setattr__(self, "tables", types.MappingProxyType(dict(self.tables)))

    def cdf(self, beta: float, s):
        b = _tw_beta_key(beta)
        if b not in self.tables:
            raise UnsupportedBetaError(f"TW table has no column for beta={beta}")
        return interp_cdf(self.tables[b], s)


def _tw_beta_key(beta: float) -> int:
    for b in TW_BETAS:
        if beta == b:
            return b
    raise UnsupportedBetaError(
        f"Tracy-Widom approximation available only for beta in {{1, 2, 4}}, got beta={beta}"
    )


def parse_tw_table(text: str, source: str = "") -> TWTable:
    """Parse ``s, F1, F2, F4`` rows; ``#`` lines are provenance comments."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{source or 'TW table'}:{lineno}: expected 4 columns, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ValueError(f"{source or 'TW table'}:{lineno}: {exc}") from None
    if len(rows) < 2:
        raise ValueError(f"{source or 'TW table'}: fewer than two data rows")
    data = np.array(rows)
    s = data[:, 0]
    if not np.all(np.diff(s) > 0):
        raise ValueError(f"{source or 'TW table'}: s column must be strictly increasing")
    tables = {}
    for col, b in enumerate(TW_BETAS, start=1):
        try:
            tables[b] = InterpTable(s, data[:, col])
        except ValueError as exc:
            raise ValueError(f"{source or 'TW table'}: column F{b}: {exc}") from None
    digest = hashlib.sha256(text.encode()).hexdigest()
    return TWTable(tables, sha256=digest, source=source)


def load_tw_table(path: str | os.PathLike | None = None) -> TWTable:
    """Load a TW table from ``path``, or the bundled table when None."""
    if path is None:
        res = importlib.resources.files("lagtail") / "data" / TW_TABLE_RESOURCE
        return parse_tw_table(res.read_text(), source=f"bundled:{TW_TABLE_RESOURCE}")
    with open(path) as fh:
        return parse_tw_table(fh.read(), source=str(path))


@functools.lru_cache(maxsize=1)
def default_tw_table() -> TWTable:
    return load_tw_table()


def tw_centering(n: int, p: int, centering: Centering | str) -> tuple[float, float]:
    """(mu, sigma) for the largest eigenvalue; refined shifts n and p by 1/2."""
    centering = Centering(centering)
    if centering is Centering.CLASSIC:
        a, b = float(n), float(p - 1)
    else:
        a, b = n - 0.5, p - 0.5
    if not (a > 0 and b > 0):
        raise ValueError(f"TW centering undefined for n={n}, p={p}")
    ra, rb = math.sqrt(a), math.sqrt(b)
    return (ra + rb) ** 2, (ra + rb) * (1.0 / ra + 1.0 / rb) ** (1.0 / 3.0)


def tw_log_tail(
    params: EnsembleParams,
    x: float,
    centering: Centering | str = Centering.CLASSIC,
    table: TWTable | None = None,
) -> float:
    """ln(1 - F_beta((p x - mu) / sigma)); -inf beyond the table's right end."""
    _tw_beta_key(params.beta)
    if table is None:
        table = default_tw_table()
    mu, sigma = tw_centering(params.n, params.p, centering)
    s = (params.p * x - mu) / sigma
    tail = 1.0 - table.cdf(params.beta, s)
    return math.log(tail) if tail > 0 else -math.inf
