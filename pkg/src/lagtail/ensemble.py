"""Value types for beta-Laguerre problems and the validity checks on queries."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class EnsembleError(ValueError):
    """Invalid ensemble parameters or spectrum."""


class Side(str, enum.Enum):
    MAX = "max"
    MIN = "min"


class Regime(str, enum.Enum):
    """Asymptotic regime the caller declares; it is never inferred from (n, p)."""

    P_OVER_N_INFTY = "p/n->inf"
    GAMMA_FINITE = "p/n->gamma"


@dataclass(frozen=True)
class EnsembleParams:
    n: int
    p: int
    beta: float

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise EnsembleError(f"n must be a positive integer, got {self.n!r}")
        if isinstance(self.p, bool) or int(self.p) != self.p or self.p < 1:
            raise EnsembleError(f"p must be a positive integer, got {self.p!r}")
        if self.p < self.n:
            raise EnsembleError(f"need p >= n, got n={self.n}, p={self.p}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise EnsembleError(f"beta must be a positive finite real, got {self.beta!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def gamma(self) -> float:
        """Aspect ratio p/n, used as the finite-gamma regime constant."""
        return self.p / self.n

    def reduced(self) -> "EnsembleParams":
        """The (n-1, p-1, beta) ensemble that supplies the non-extreme eigenvalues."""
        return EnsembleParams(self.n - 1, self.p - 1, self.beta)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Strictly decreasing, strictly positive eigenvalues."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size and not np.all(np.isfinite(v)):
            raise EnsembleError("spectrum contains non-finite values")
        if v.size and v[-1] <= 0:
            raise EnsembleError(f"spectrum must be positive, smallest is {v[-1]!r}")
        if v.size > 1 and not np.all(np.diff(v) < 0):
            raise EnsembleError("spectrum must be strictly decreasing (ties are rejected)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_unsorted(cls, values: Iterable[float]) -> "Spectrum":
        return cls(np.sort(np.asarray(list(values), dtype=float))[::-1])

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, Spectrum) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"Spectrum({self.values.tolist()!r})"


@dataclass(frozen=True)
class TailQuery:
    """P(lambda_(1) > p*threshold) for MAX, P(lambda_(n) < p*threshold) for MIN."""

    side: Side
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise EnsembleError(f"threshold must be positive and finite, got {self.threshold!r}")
        object.__setattr__(self, "threshold", float(self.threshold))


@dataclass(frozen=True)
class Violation:
    bound: str
    message: str

    def __str__(self) -> str:
        return self.message


def mp_upper_edge(beta: float, gamma: float) -> float:
    """Right edge of the bulk of lambda/p, beta * (1 + sqrt(1/gamma))**2."""
    return beta * (1.0 + math.sqrt(1.0 / gamma)) ** 2


def validate(params: EnsembleParams, query: TailQuery, regime: Regime) -> list[Violation]:
    """Check that the query threshold lies where the asymptotic theory applies.

    Returns an empty list when the query is admissible.
    """
    regime = Regime(regime)
    x = query.threshold
    beta = params.beta
    if query.side is Side.MIN:
        if not 0 < x < beta:
            return [Violation("0<y<beta", f"y must satisfy 0 < y < beta (got y={x:g}, beta={beta:g})")]
        return []
    if regime is Regime.P_OVER_N_INFTY:
        if not x > beta:
            return [Violation("x>beta", f"x must exceed beta (got x={x:g}, beta={beta:g})")]
        return []
    edge = mp_upper_edge(beta, params.gamma)
    if not x > edge:
        return [
            Violation(
                "x>x_star",
                f"x must exceed the bulk edge beta*(1+sqrt(n/p))^2 = {edge:.6g} (got x={x:g})",
            )
        ]
    return []
