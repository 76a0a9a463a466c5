"""Direct and importance-sampling Monte Carlo estimators of extreme-eigenvalue tails.

Replicates are organised in fixed blocks of ``BLOCK`` consecutive indices;
block ``b`` always draws from substream ``b`` of the master seed and is always
generated in full, so any replicate's weight depends only on (seed, index).
Shards, worker counts and merge order therefore cannot change a result, and
the accumulator sums are exact, so merging is exactly associative.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import MPLaw, j_rate_bound, log_A
from .ensemble import EnsembleError, EnsembleParams, Regime, Side, Spectrum, TailQuery, Violation, validate
from .numerics import NumericalError
from .sampler import (
    RngStream,
    sample_bottom_exponential,
    sample_spectra,
    sample_top_exponential,
    tilted_rate_max,
    tilted_rate_min,
)

log = logging.getLogger(__name__)

BLOCK = 1000
WEIGHT_SHARE_WARN = 0.5
LOW_COUNT = 10
_LN2 = math.log(2.0)


class Method(str, enum.Enum):
    DMC = "dmc"
    IS_MAX = "is-max"
    IS_MAX_GAMMA = "is-max-gamma"
    IS_MIN = "is-min"


class ValidationError(EnsembleError):
    """The query lies outside the region where the estimator is defined."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations))


class EstimationError(RuntimeError):
    """A replicate failed; the message names the replicate range and stream."""


# ---------------------------------------------------------------------------
# Log weights
# ---------------------------------------------------------------------------


def _log_target_terms(params: EnsembleParams, lam, rest, side: Side):
    # ln of n * A_n * prod |lam - rest_i|^beta * lam^{beta(p-n+1)/2 - 1} e^{-lam/2}
    n, p, beta = params.n, params.p, params.beta
    lam = np.asarray(lam, dtype=float)
    rest = np.asarray(rest, dtype=float)
    gaps = lam[..., None] - rest if side is Side.MAX else rest - lam[..., None]
    vdm = beta * np.log(gaps).sum(axis=-1) if rest.shape[-1] else 0.0
    return (
        math.log(n)
        + log_A(n, p, beta)
        + vdm
        + (beta * (p - n + 1) / 2.0 - 1.0) * np.log(lam)
        - lam / 2.0
    )


def log_weights_max(params: EnsembleParams, x: float, rate: float, lam1, rest) -> np.ndarray:
    """Vectorised likelihood ratios for top-eigenvalue tilting.

    ``lam1`` has shape (N,), ``rest`` shape (N, n-1) sorted descending.
    """
    lam1 = np.asarray(lam1, dtype=float)
    rest = np.asarray(rest, dtype=float).reshape(lam1.shape + (params.n - 1,))
    lower = params.p * x
    if rest.shape[-1]:
        lower = np.maximum(lower, rest[..., 0])
    if np.any(~(lam1 > lower)):
        raise ValueError("lambda1 must exceed max(p*x, lambda2)")
    log_q = math.log(rate) - rate * (lam1 - lower)
    return _log_target_terms(params, lam1, rest, Side.MAX) - log_q


def log_weights_min(params: EnsembleParams, y: float, lam_n, rest) -> np.ndarray:
    """Vectorised likelihood ratios for bottom-eigenvalue tilting on (0, upper)."""
    lam_n = np.asarray(lam_n, dtype=float)
    rest = np.asarray(rest, dtype=float).reshape(lam_n.shape + (params.n - 1,))
    rate = tilted_rate_min(y, params.beta)
    upper = params.p * y
    if rest.shape[-1]:
        upper = np.minimum(upper, rest[..., -1])
    if np.any(~((lam_n > 0) & (lam_n < upper))):
        raise ValueError("lambda_n must lie in (0, min(p*y, lambda_(n-1)))")
    # truncated density rate e^{rate (l - u)} / (1 - e^{-rate u})
    log_q = math.log(rate) + rate * (lam_n - upper) - np.log(-np.expm1(-rate * upper))
    return _log_target_terms(params, lam_n, rest, Side.MIN) - log_q


def _as_rest(params: EnsembleParams, rest) -> np.ndarray:
    vals = rest.values if isinstance(rest, Spectrum) else np.asarray(rest, dtype=float)
    if vals.size != params.n - 1:
        raise ValueError(f"rest spectrum must have n-1 = {params.n - 1} values, got {vals.size}")
    return vals


def log_weight_is_max(params: EnsembleParams, x: float, lambda1: float, rest) -> float:
    """ln L for one replicate of the top-eigenvalue sampler with rate (x-beta)/(2x)."""
    if not x > params.beta:
        raise ValueError(f"x must exceed beta, got x={x}")
    rate = tilted_rate_max(x, params.beta)
    return float(log_weights_max(params, x, rate, np.array([lambda1]), _as_rest(params, rest)[None, :])[0])


def log_weight_is_max_gamma(params: EnsembleParams, x: float, J: float, lambda1: float, rest) -> float:
    """ln L with the tilting rate replaced by ``J``."""
    if not J > 0:
        raise ValueError(f"J must be positive, got {J}")
    return float(log_weights_max(params, x, J, np.array([lambda1]), _as_rest(params, rest)[None, :])[0])


def log_weight_is_min(params: EnsembleParams, y: float, lambda_n: float, rest) -> float:
    if not 0 < y < params.beta:
        raise ValueError(f"y must satisfy 0 < y < beta, got y={y}")
    return float(log_weights_min(params, y, np.array([lambda_n]), _as_rest(params, rest)[None, :])[0])


# ---------------------------------------------------------------------------
# Exact accumulator
# ---------------------------------------------------------------------------


def _quantize(log_w: np.ndarray):
    """Write each finite weight as m * 2**e with an integer m of 53 bits.

    The representation depends only on the weight, so sums of the (m, e)
    pairs in integer arithmetic are exact and order independent.
    """
    finite = np.isfinite(log_w)
    lw = log_w[finite]
    e = np.floor(lw / _LN2).astype(np.int64) - 52
    m = np.rint(np.exp(lw - e * _LN2)).astype(np.int64)
    return m, e


def _log_of(num: int, exp: int) -> float:
    if num == 0:
        return -math.inf
    return math.log(num) + exp * _LN2


@dataclass(frozen=True)
class EstimateAccumulator:
    """Sufficient statistics of a run: count, sum of weights and of squares.

    Sums are stored exactly as ``s1 * 2**e1`` and ``s2 * 2**e2`` with Python
    integers, which makes merge exactly commutative and associative.
    """

    key: tuple | None = None
    count: int = 0
    s1: int = 0
    e1: int = 0
    s2: int = 0
    e2: int = 0
    log_max_w: float = -math.inf
    nonzero: int = 0

    @classmethod
    def empty(cls, key=None) -> "EstimateAccumulator":
        return cls(key=key)

    @classmethod
    def from_log_weights(cls, log_w, key=None) -> "EstimateAccumulator":
        log_w = np.asarray(log_w, dtype=float).reshape(-1)
        if np.isnan(log_w).any() or np.isposinf(log_w).any():
            i = int(np.flatnonzero(np.isnan(log_w) | np.isposinf(log_w))[0])
            raise NumericalError(f"non-finite log weight {log_w[i]!r} at position {i}")
        m, e = _quantize(log_w)
        if m.size == 0:
            return cls(key=key, count=log_w.size)
        e_min = int(e.min())
        s1 = 0
        s2 = 0
        for mi, ei in zip(m.tolist(), (e - e_min).tolist()):
            s1 += mi << ei
            s2 += (mi * mi) << (2 * ei)
        return cls(
            key=key,
            count=log_w.size,
            s1=s1,
            e1=e_min,
            s2=s2,
            e2=2 * e_min,
            log_max_w=float(log_w.max()),
            nonzero=int(m.size),
        )

    @property
    def log_sum_w(self) -> float:
        return _log_of(self.s1, self.e1)

    @property
    def log_sum_w2(self) -> float:
        return _log_of(self.s2, self.e2)

    def merge(self, other: "EstimateAccumulator") -> "EstimateAccumulator":
        return merge(self, other)


def _add_scaled(a: int, ea: int, b: int, eb: int) -> tuple[int, int]:
    if a == 0:
        return b, eb
    if b == 0:
        return a, ea
    e = min(ea, eb)
    return (a << (ea - e)) + (b << (eb - e)), e


def merge(a: EstimateAccumulator, b: EstimateAccumulator) -> EstimateAccumulator:
    """Combine two accumulators; provenance keys must agree (None is a wildcard)."""
    if a.key is not None and b.key is not None and a.key != b.key:
        raise ValueError(f"cannot merge accumulators with different provenance: {a.key} vs {b.key}")
    s1, e1 = _add_scaled(a.s1, a.e1, b.s1, b.e1)
    s2, e2 = _add_scaled(a.s2, a.e2, b.s2, b.e2)
    return EstimateAccumulator(
        key=a.key if a.key is not None else b.key,
        count=a.count + b.count,
        s1=s1,
        e1=e1,
        s2=s2,
        e2=e2,
        log_max_w=max(a.log_max_w, b.log_max_w),
        nonzero=a.nonzero + b.nonzero,
    )


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateReport:
    log_estimate: float
    log_std: float
    std_over_est: float | None
    log_second_moment: float
    efficiency_ratio: float | None
    max_weight_share: float | None
    n_reps: int
    method: Method
    seed: int
    params: EnsembleParams
    query: TailQuery
    rate: float | None = None
    nonzero: int = 0
    flags: tuple = field(default_factory=tuple)

    @property
    def estimate(self) -> float:
        return math.exp(self.log_estimate)

    @property
    def std(self) -> float:
        return math.exp(self.log_std)

    @property
    def std_error(self) -> float:
        """Standard deviation of the estimate itself, Std / sqrt(N)."""
        return math.exp(self.log_std - 0.5 * math.log(self.n_reps))

    def to_dict(self) -> dict:
        def num(v):
            return v if v is None or math.isfinite(v) else None

        return {
            "method": self.method.value,
            "n": self.params.n,
            "p": self.params.p,
            "beta": self.params.beta,
            "side": self.query.side.value,
            "threshold": self.query.threshold,
            "n_reps": self.n_reps,
            "seed": self.seed,
            "rate": self.rate,
            "log_estimate": num(self.log_estimate),
            "log_std": num(self.log_std),
            "std_over_est": num(self.std_over_est),
            "log_second_moment": num(self.log_second_moment),
            "efficiency_ratio": num(self.efficiency_ratio),
            "max_weight_share": num(self.max_weight_share),
            "nonzero": self.nonzero,
            "flags": list(self.flags),
        }


def report_from_accumulator(
    acc: EstimateAccumulator,
    params: EnsembleParams,
    query: TailQuery,
    method: Method,
    seed: int,
    rate: float | None = None,
) -> EstimateReport:
    n = acc.count
    if n < 1:
        raise ValueError("cannot build a report from an empty accumulator")
    flags = []
    log_sum = acc.log_sum_w
    log_z = log_sum - math.log(n)
    log_m2 = acc.log_sum_w2 - math.log(n)
    if acc.nonzero == 0:
        flags.append("zero-estimate")
    elif method is Method.DMC and acc.nonzero < LOW_COUNT:
        flags.append("low-count")
    # exact (N S2 - S1^2) / (N (N-1)) with integer arithmetic
    if n > 1 and acc.nonzero:
        e = min(acc.e2, 2 * acc.e1)
        num = (n * acc.s2 << (acc.e2 - e)) - ((acc.s1 * acc.s1) << (2 * acc.e1 - e))
        if num < 0:
            raise NumericalError("negative variance numerator from exact sums")
        log_var = _log_of(num, e) - math.log(n) - math.log(n - 1)
    else:
        log_var = -math.inf
    if log_var == -math.inf and acc.nonzero:
        flags.append("degenerate-variance")
    log_std = 0.5 * log_var
    if acc.nonzero:
        std_over_est = math.exp(log_std - log_z)
        share = math.exp(acc.log_max_w - log_sum)
        if share > WEIGHT_SHARE_WARN and n > 1:
            flags.append("weight-degeneracy")
            log.warning("largest weight carries %.2f of the total (%s, N=%d)", share, method.value, n)
    else:
        std_over_est = None
        share = None
    eff = log_m2 / (2.0 * log_z) if acc.nonzero and log_z < 0 else None
    return EstimateReport(
        log_estimate=log_z,
        log_std=log_std,
        std_over_est=std_over_est,
        log_second_moment=log_m2,
        efficiency_ratio=eff,
        max_weight_share=share,
        n_reps=n,
        method=method,
        seed=seed,
        params=params,
        query=query,
        rate=rate,
        nonzero=acc.nonzero,
        flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# Replicate generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimatePlan:
    """Everything that determines the weight of replicate j."""

    params: EnsembleParams
    query: TailQuery
    method: Method
    seed: int
    rate: float | None = None

    @property
    def key(self) -> tuple:
        p = self.params
        return (self.method.value, p.n, p.p, p.beta, self.query.side.value, self.query.threshold, self.rate, self.seed)

    def block_log_weights(self, b: int) -> np.ndarray:
        """Log weights of replicates b*BLOCK .. (b+1)*BLOCK-1."""
        rng = RngStream(self.seed).substream(b).generator
        prm, t = self.params, self.query.threshold
        n, p, beta = prm.n, prm.p, prm.beta
        if self.method is Method.DMC:
            which = "max" if self.query.side is Side.MAX else "min"
            ext = sample_spectra(n, p, beta, rng, BLOCK, which)[:, 0]
            hit = ext > p * t if self.query.side is Side.MAX else ext < p * t
            return np.where(hit, 0.0, -np.inf)
        if n > 1:
            rest = sample_spectra(n - 1, p - 1, beta, rng, BLOCK, "all")
        else:
            rest = np.empty((BLOCK, 0))
        if self.method is Method.IS_MIN:
            upper = np.full(BLOCK, p * t) if n == 1 else np.minimum(p * t, rest[:, -1])
            lam = sample_bottom_exponential(upper, self.rate, rng)
            return log_weights_min(prm, t, lam, rest)
        lower = np.full(BLOCK, p * t) if n == 1 else np.maximum(p * t, rest[:, 0])
        lam = sample_top_exponential(lower, self.rate, rng, size=BLOCK)
        return log_weights_max(prm, t, self.rate, lam, rest)

    def accumulate(self, start: int, stop: int) -> EstimateAccumulator:
        """Accumulator over replicates [start, stop)."""
        if not 0 <= start <= stop:
            raise ValueError(f"bad replicate range [{start}, {stop})")
        acc = EstimateAccumulator.empty(self.key)
        b = start // BLOCK
        while b * BLOCK < stop:
            lo = max(start, b * BLOCK) - b * BLOCK
            hi = min(stop, (b + 1) * BLOCK) - b * BLOCK
            try:
                lw = self.block_log_weights(b)[lo:hi]
                part = EstimateAccumulator.from_log_weights(lw, self.key)
            except Exception as exc:
                raise EstimationError(
                    f"replicates {b * BLOCK + lo}..{b * BLOCK + hi - 1} failed "
                    f"(seed={self.seed}, substream={b}, method={self.method.value}): {exc}"
                ) from exc
            acc = merge(acc, part)
            b += 1
        return acc


def default_rate(params: EnsembleParams, query: TailQuery, method: Method, rate_j: float | None = None) -> float | None:
    if method is Method.DMC:
        return None
    if method is Method.IS_MIN:
        return tilted_rate_min(query.threshold, params.beta)
    if method is Method.IS_MAX:
        return tilted_rate_max(query.threshold, params.beta)
    bound = j_rate_bound(MPLaw.for_params(params), query.threshold)
    if rate_j is None:
        return 0.9 * bound
    if not 0 < rate_j < bound:
        raise ValidationError(
            [Violation("0<J<bound", f"rate J must satisfy 0 < J < {bound:.6g} (got J={rate_j:g})")]
        )
    return float(rate_j)


def _default_regime(method: Method) -> Regime:
    return Regime.GAMMA_FINITE if method is Method.IS_MAX_GAMMA else Regime.P_OVER_N_INFTY


def make_plan(
    params: EnsembleParams,
    query: TailQuery,
    method: Method | str,
    seed: int,
    rate_j: float | None = None,
    regime: Regime | str | None = None,
) -> EstimatePlan:
    method = Method(method)
    want = Side.MIN if method is Method.IS_MIN else Side.MAX
    if method is not Method.DMC and query.side is not want:
        raise ValidationError([Violation("side", f"method {method.value} estimates the {want.value} side")])
    regime = _default_regime(method) if regime is None else Regime(regime)
    violations = validate(params, query, regime)
    if violations and method is not Method.DMC:
        raise ValidationError(violations)
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit nonnegative integer, got {seed!r}")
    return EstimatePlan(params, query, method, int(seed), default_rate(params, query, method, rate_j))


def _accumulate_chunk(plan: EstimatePlan, start: int, stop: int) -> EstimateAccumulator:
    return plan.accumulate(start, stop)


def accumulate(plan: EstimatePlan, n_reps: int, workers: int = 1) -> EstimateAccumulator:
    """Accumulate replicates [0, n_reps), split over ``workers`` processes.

    Chunks are whole blocks, so the result is identical for every worker count.
    """
    if n_reps < 1:
        raise ValueError(f"need at least one replicate, got {n_reps}")
    n_blocks = -(-n_reps // BLOCK)
    workers = max(1, min(int(workers), n_blocks))
    if workers == 1:
        return plan.accumulate(0, n_reps)
    edges = [min(n_reps, (n_blocks * k // workers) * BLOCK) for k in range(workers + 1)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_accumulate_chunk, plan, a, b) for a, b in zip(edges, edges[1:]) if b > a]
        acc = EstimateAccumulator.empty(plan.key)
        for f in futures:
            acc = merge(acc, f.result())
    return acc


def run_estimate(
    params: EnsembleParams,
    query: TailQuery,
    method: Method | str,
    n_reps: int,
    seed: int,
    rate_j: float | None = None,
    workers: int = 1,
    regime: Regime | str | None = None,
) -> EstimateReport:
    """Run ``n_reps`` replicates of the chosen estimator and summarize them."""
    plan = make_plan(params, query, method, seed, rate_j, regime)
    acc = accumulate(plan, n_reps, workers)
    return report_from_accumulator(acc, params, query, plan.method, plan.seed, plan.rate)


__all__ = [
    "BLOCK",
    "EstimateAccumulator",
    "EstimatePlan",
    "EstimateReport",
    "EstimationError",
    "Method",
    "ValidationError",
    "accumulate",
    "default_rate",
    "log_weight_is_max",
    "log_weight_is_max_gamma",
    "log_weight_is_min",
    "log_weights_max",
    "log_weights_min",
    "make_plan",
    "merge",
    "report_from_accumulator",
    "run_estimate",
]
