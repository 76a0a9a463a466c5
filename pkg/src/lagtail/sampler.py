"""Beta-Laguerre spectra from the bidiagonal chi model, plus the tilted draws.

The eigenvalues of ``B B^T`` for a lower-bidiagonal ``B`` with independent
chi entries follow the beta-Laguerre law, so a spectrum costs O(m) variates
and one symmetric tridiagonal eigensolve. The eigensolver is Sturm-sequence
bisection (guaranteed convergence) finished by Newton steps that are
never allowed to leave the Sturm bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .ensemble import EnsembleError, EnsembleParams, Spectrum


class EigenSolverError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


class RngStream:
    """Seeded, splittable random stream.

    A stream is identified by ``(seed, key)``; ``substream(i)`` appends ``i``
    to the key. Identical identifiers give bit-identical draws, and distinct
    keys are statistically independent (numpy ``SeedSequence`` spawning).
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if isinstance(seed, bool) or int(seed) != seed or seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def substream(self, i: int) -> "RngStream":
        return RngStream(self.seed, self.key + (int(i),))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


# ---------------------------------------------------------------------------
# Variates
# ---------------------------------------------------------------------------


def sample_chi(df, rng, size=None):
    """Chi variate(s) with ``df`` degrees of freedom (df may be non-integer)."""
    df_arr = np.asarray(df, dtype=float)
    if not np.all(df_arr > 0):
        raise ValueError(f"chi degrees of freedom must be positive, got {df!r}")
    out = np.sqrt(_gen(rng).chisquare(df_arr, size=size))
    return float(out) if np.ndim(out) == 0 else out


def sample_top_exponential(lower: float, rate: float, rng, size=None):
    """Shifted exponential on (lower, inf) with the given rate."""
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate!r}")
    e = _gen(rng).standard_exponential(size=size) / rate
    out = np.asarray(lower, dtype=float) + e
    # a zero exponential draw would land on the boundary
    out = np.where(out > lower, out, np.nextafter(lower, np.inf))
    return float(out) if np.ndim(out) == 0 else out


def sample_bottom_exponential(upper, rate: float, rng, size=None):
    """Reflected exponential ``rate * exp(rate (l - upper))`` conditioned on (0, upper).

    Sampled by inversion of the truncated CDF, so every draw lies in
    ``(0, upper)``.
    """
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate!r}")
    upper = np.asarray(upper, dtype=float)
    if not np.all(upper > 0):
        raise ValueError(f"upper must be positive, got {upper!r}")
    if size is None:
        size = upper.shape if upper.ndim else None
    v = 1.0 - _gen(rng).random(size=size)  # in (0, 1]
    ru = rate * upper
    log_tail = -ru  # log e^{-r u}
    log_mass = np.log(-np.expm1(-ru))  # log(1 - e^{-r u})
    out = upper + np.logaddexp(log_tail, np.log(v) + log_mass) / rate
    out = np.minimum(out, np.nextafter(upper, 0.0))
    out = np.maximum(out, np.nextafter(0.0, 1.0))
    return float(out) if np.ndim(out) == 0 else out


def tilted_rate_max(x: float, beta: float) -> float:
    """Exponential rate (x - beta) / (2x) for the top eigenvalue."""
    return (x - beta) / (2.0 * x)


def tilted_rate_min(y: float, beta: float) -> float:
    """Exponential rate (beta - y) / (2y) for the bottom eigenvalue."""
    return (beta - y) / (2.0 * y)


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------


def chi_degrees(m: int, p: int, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Degrees of freedom of the m x m bidiagonal model for dimension p.

    Diagonal ``beta*p, beta*(p-1), ..., beta*(p-m+1)``; subdiagonal
    ``beta*(m-1), ..., beta``.
    """
    diag = beta * (p - np.arange(m, dtype=float))
    sub = beta * np.arange(m - 1, 0, -1, dtype=float)
    return diag, sub


@dataclass(frozen=True, eq=False)
class BidiagonalMatrix:
    diag: np.ndarray
    subdiag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        s = np.asarray(self.subdiag, dtype=float)
        if d.ndim != 1 or s.ndim != 1 or s.size != max(d.size - 1, 0):
            raise ValueError("bidiagonal shape mismatch")
        if not (np.all(d > 0) and np.all(s > 0)):
            raise ValueError("bidiagonal entries must be positive")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "subdiag", s)

    @classmethod
    def sample(cls, m: int, p: int, beta: float, rng) -> "BidiagonalMatrix":
        dd, sd = chi_degrees(m, p, beta)
        g = _gen(rng)
        d = np.sqrt(g.chisquare(dd))
        s = np.sqrt(g.chisquare(sd)) if m > 1 else np.empty(0)
        return cls(d, s)

    def dense(self) -> np.ndarray:
        m = self.diag.size
        b = np.diag(self.diag)
        if m > 1:
            b[np.arange(1, m), np.arange(m - 1)] = self.subdiag
        return b

    def gram(self) -> "SymTridiagonal":
        """B B^T as a symmetric tridiagonal matrix."""
        d, s = self.diag, self.subdiag
        t_diag = d**2
        t_diag[1:] += s**2
        return SymTridiagonal(t_diag, s * d[:-1])


@dataclass(frozen=True, eq=False)
class SymTridiagonal:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        e = np.asarray(self.offdiag, dtype=float)
        if d.ndim != 1 or e.ndim != 1 or e.size != max(d.size - 1, 0):
            raise ValueError("tridiagonal shape mismatch")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


# ---------------------------------------------------------------------------
# Sturm bisection kernels
# ---------------------------------------------------------------------------

_MAX_BISECT = 600


@numba.njit(cache=True, error_model="numpy")
def _sturm_eval(d, e2, x, pivmin):
    """Sturm count below x and f'/f for f(x) = det(T - x I), from one LDL pass."""
    m = d.shape[0]
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    dq = -1.0
    ratio = dq / q
    count = 1 if q < 0 else 0
    for i in range(1, m):
        dq = -1.0 + e2[i - 1] * dq / (q * q)
        q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0:
            count += 1
        ratio += dq / q
    return count, ratio


@numba.njit(cache=True, error_model="numpy")
def _qd_eval(dd, dll, x, pivmin):
    """Same as _sturm_eval for T = B B^T given only D = d^2 and DLL = s^2.

    Stationary qd transform of L D L^T - x I; unlike pivots formed from T it
    keeps relative accuracy for tiny eigenvalues.
    """
    m = dd.shape[0]
    s = -x
    ds = -1.0
    count = 0
    ratio = 0.0
    for i in range(m):
        dp = dd[i] + s
        if abs(dp) < pivmin:
            dp = -pivmin
        if dp < 0:
            count += 1
        ratio += ds / dp
        if i < m - 1:
            t = dll[i] / dp
            ds = t * ds * dd[i] / dp - 1.0
            s = t * s - x
    return count, ratio


@numba.njit(cache=True, error_model="numpy")
def _count(a, b, x, pivmin, factored):
    if factored:
        return _qd_eval(a, b, x, pivmin)
    return _sturm_eval(a, b, x, pivmin)


@numba.njit(cache=True, error_model="numpy")
def _split_point(lo, hi):
    # geometric midpoint while a nonnegative bracket spans many octaves, so
    # tiny eigenvalues cost O(log log) steps instead of O(log)
    if lo >= 0.0 and hi > 16.0 * lo:
        a = max(lo, hi * 2.0**-1000)
        x = math.sqrt(a) * math.sqrt(hi)
        if lo < x < hi:
            return x
    return 0.5 * (lo + hi)


@numba.njit(cache=True, error_model="numpy")
def _find_eigenvalue(d, e2, k, lower, upper, pivmin, factored):
    """k-th smallest eigenvalue (0-based); returns (value, converged).

    ``d``/``e2`` are the diagonal and squared off-diagonal of T, or D and
    DLL of its bidiagonal factor when ``factored``. Bisection on Sturm counts
    until the bracket holds only eigenvalue k and
    is narrow, then Newton steps on det(T - x I) kept inside the bracket.
    A Newton step that does not at least halve the previous step is followed
    by bisection. Every count also tightens ``lower``/``upper`` for the
    larger indices.
    """
    eps = 2.220446049250313e-16
    m = d.shape[0]
    lo = lower[k]
    hi = upper[k]
    c_lo = -1
    c_hi = -1
    x = _split_point(lo, hi)
    newton = False
    prev_step = np.inf
    for _ in range(_MAX_BISECT):
        width_tol = 2.0 * eps * max(abs(lo), abs(hi))
        if hi - lo <= width_tol:
            return 0.5 * (lo + hi), True
        if not (lo < x < hi):
            x = _split_point(lo, hi)
            if x <= lo or x >= hi:
                return 0.5 * (lo + hi), True
        c, ratio = _count(d, e2, x, pivmin, factored)
        if c > k:
            hi = x
            c_hi = c
        else:
            lo = x
            c_lo = c
        for j in range(k + 1, m):
            if j < c:
                if x < upper[j]:
                    upper[j] = x
            elif x > lower[j]:
                lower[j] = x
        if not newton and c_lo == k and c_hi == k + 1 and hi - lo <= 1e-3 * max(abs(lo), abs(hi)):
            newton = True
        if newton and ratio != 0.0 and np.isfinite(ratio):
            step = 1.0 / ratio
            cand = x - step
            if abs(step) <= 2.0 * eps * abs(x) and lo <= cand <= hi:
                return cand, True
            if lo < cand < hi and abs(step) <= 0.5 * prev_step:
                prev_step = abs(step)
                x = cand
                continue
            prev_step = 0.5 * (hi - lo)
        x = _split_point(lo, hi)
    return 0.5 * (lo + hi), False


@numba.njit(cache=True, error_model="numpy")
def _gershgorin(d, e):
    m = d.shape[0]
    lo = np.inf
    hi = -np.inf
    for i in range(m):
        r = 0.0
        if i > 0:
            r += abs(e[i - 1])
        if i < m - 1:
            r += abs(e[i])
        lo = min(lo, d[i] - r)
        hi = max(hi, d[i] + r)
    pad = 4.0 * 2.220446049250313e-16 * max(abs(lo), abs(hi)) + 1e-300
    return lo - pad, hi + pad


@numba.njit(cache=True, error_model="numpy")
def _eig_rows(diag, off, which, factored):
    """Eigenvalues of each row's tridiagonal, sorted descending.

    Rows are (diag, off) of T, or (d^2, s^2) of a lower bidiagonal B with
    T = B B^T when ``factored``.
    which: 0 -> all, 1 -> largest only, 2 -> smallest only.
    Returns (values, ok_flags).
    """
    r, m = diag.shape
    ncols = m if which == 0 else 1
    out = np.empty((r, ncols))
    ok = np.ones(r, dtype=np.bool_)
    e2 = np.empty(max(m - 1, 0))
    td = np.empty(m)
    te = np.empty(max(m - 1, 0))
    for row in range(r):
        if factored:
            dd = diag[row]
            e2[:] = off[row]
            for i in range(m):
                td[i] = dd[i] + (e2[i - 1] if i > 0 else 0.0)
            for i in range(m - 1):
                te[i] = math.sqrt(e2[i] * dd[i])
            a = dd
        else:
            td[:] = diag[row]
            te[:] = off[row]
            for i in range(m - 1):
                e2[i] = te[i] * te[i]
            a = td
        emax = 0.0
        for i in range(m - 1):
            emax = max(emax, e2[i])
        lo, hi = _gershgorin(td, te)
        pivmin = 2.2250738585072014e-308 * max(1.0, emax)
        if factored:
            lo = 0.0
        elif lo < 0.0 and _sturm_eval(td, e2, 0.0, pivmin)[0] == 0:
            lo = 0.0  # positive semidefinite
        lower = np.full(m, lo)
        upper = np.full(m, hi)
        if which == 0:
            for k in range(m):
                val, good = _find_eigenvalue(a, e2, k, lower, upper, pivmin, factored)
                out[row, m - 1 - k] = val
                if not good:
                    ok[row] = False
        else:
            k = m - 1 if which == 1 else 0
            val, good = _find_eigenvalue(a, e2, k, lower, upper, pivmin, factored)
            out[row, 0] = val
            ok[row] = good
    return out, ok


def _solve_rows(diag: np.ndarray, off: np.ndarray, which: int, factored: bool = False) -> np.ndarray:
    diag = np.ascontiguousarray(diag, dtype=float)
    off = np.ascontiguousarray(off, dtype=float)
    if off.shape[1] == 0:
        off = np.zeros((diag.shape[0], 0))
    finite = np.isfinite(diag).all(axis=1) & np.isfinite(off).all(axis=1)
    if not finite.all():
        i = int(np.flatnonzero(~finite)[0])
        raise EigenSolverError(
            f"non-finite matrix entries in row {i}: diag={diag[i].tolist()}, off={off[i].tolist()}"
        )
    vals, ok = _eig_rows(diag, off, which, factored)
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        raise EigenSolverError(
            f"bisection did not converge for row {i}: diag={diag[i].tolist()}, off={off[i].tolist()}"
        )
    if which == 0 and diag.shape[1] > 1:
        tied = np.flatnonzero(np.any(np.diff(vals, axis=1) >= 0, axis=1))
        for i in tied:
            if factored:
                d, e = _gram_from_factor(diag[i], off[i])
            else:
                d, e = diag[i], off[i]
            vals[i] = _resolve_with_shift(d, e)
    return vals


def _gram_from_factor(d2: np.ndarray, s2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t_diag = np.array(d2, dtype=float)
    t_diag[..., 1:] += s2
    return t_diag, np.sqrt(s2 * d2[..., :-1])


def _resolve_with_shift(d: np.ndarray, e: np.ndarray) -> np.ndarray:
    # a tie from the solver: re-solve T + s I, which changes the rounding pattern
    scale = max(np.abs(d).max(), np.abs(e).max() if e.size else 0.0)
    shift = scale * 2.0**-20
    vals, ok = _eig_rows((d + shift)[None, :], e[None, :], 0, False)
    vals = vals[0] - shift
    if not ok[0] or np.any(np.diff(vals) >= 0):
        raise EigenSolverError(f"repeated eigenvalue: diag={d.tolist()}, off={e.tolist()}")
    return vals


def eigvalsh_tridiagonal(diag, off) -> np.ndarray:
    """All eigenvalues of one symmetric tridiagonal matrix, descending."""
    d = np.asarray(diag, dtype=float)
    e = np.asarray(off, dtype=float)
    return _solve_rows(d[None, :], e[None, :] if e.size else np.zeros((1, 0)), 0)[0]


def tridiag_eigenvalues(t: SymTridiagonal) -> Spectrum:
    """Eigenvalues of ``t`` as a Spectrum (requires a positive definite matrix)."""
    vals = eigvalsh_tridiagonal(t.diag, t.offdiag)
    if vals[-1] <= 0:
        raise EigenSolverError(f"nonpositive eigenvalue {vals[-1]!r}: diag={t.diag.tolist()}")
    return Spectrum(vals)


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------


def sample_factor_rows(m: int, p: int, beta: float, rng, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Squared entries (d^2, s^2) of ``count`` independent bidiagonal factors B.

    Draw order is fixed (all diagonal chis, then all subdiagonal chis), which
    is what makes a block of replicates reproducible from its stream.
    """
    dd, sd = chi_degrees(m, p, beta)
    g = _gen(rng)
    d2 = g.chisquare(dd, size=(count, m))
    s2 = g.chisquare(sd, size=(count, m - 1)) if m > 1 else np.empty((count, 0))
    return d2, s2


def sample_gram_rows(m: int, p: int, beta: float, rng, count: int) -> tuple[np.ndarray, np.ndarray]:
    """``count`` independent tridiagonal B B^T matrices as (diag, off) row arrays."""
    return _gram_from_factor(*sample_factor_rows(m, p, beta, rng, count))


def sample_spectra(m: int, p: int, beta: float, rng, count: int, which: str = "all") -> np.ndarray:
    """Eigenvalues of ``count`` draws of the (m, p, beta) ensemble.

    Rows are sorted descending; ``which`` of "max"/"min" returns a single
    column with only that eigenvalue.
    """
    return spectra_from_factors(*sample_factor_rows(m, p, beta, rng, count), which)


def spectra_from_factors(d2: np.ndarray, s2: np.ndarray, which: str = "all") -> np.ndarray:
    """Eigenvalues of B B^T for each row of squared bidiagonal entries (d^2, s^2)."""
    code = {"all": 0, "max": 1, "min": 2}[which]
    d2 = np.atleast_2d(np.asarray(d2, dtype=float))
    s2 = np.asarray(s2, dtype=float).reshape(d2.shape[0], d2.shape[1] - 1)
    if np.any(d2 < 0) or np.any(s2 < 0):
        raise ValueError("squared entries must be nonnegative")
    vals = _solve_rows(d2, s2, code, factored=True)
    if np.any(vals <= 0):
        i = int(np.flatnonzero(np.any(vals <= 0, axis=1))[0])
        raise EigenSolverError(
            f"nonpositive eigenvalue in row {i}: d^2={d2[i].tolist()}, s^2={s2[i].tolist()}"
        )
    return vals


def sample_spectrum(params: EnsembleParams, rng) -> Spectrum:
    """One draw of the full (n, p, beta) spectrum."""
    return Spectrum(sample_spectra(params.n, params.p, params.beta, rng, 1)[0])


def sample_rest_spectrum(params: EnsembleParams, rng) -> Spectrum:
    """One draw of the (n-1, p-1, beta) spectrum used by the tilted samplers."""
    if params.n < 2:
        raise EnsembleError("the reduced spectrum needs n >= 2; for n = 1 it is empty")
    r = params.reduced()
    return Spectrum(sample_spectra(r.n, r.p, r.beta, rng, 1)[0])


def trace_degrees(params: EnsembleParams) -> float:
    """Sum of eigenvalues is chi-square with beta*p*n degrees of freedom."""
    return params.beta * params.p * params.n


__all__ = [
    "BidiagonalMatrix",
    "EigenSolverError",
    "RngStream",
    "SymTridiagonal",
    "chi_degrees",
    "eigvalsh_tridiagonal",
    "sample_bottom_exponential",
    "sample_chi",
    "sample_factor_rows",
    "spectra_from_factors",
    "sample_gram_rows",
    "sample_rest_spectrum",
    "sample_spectra",
    "sample_spectrum",
    "sample_top_exponential",
    "tilted_rate_max",
    "tilted_rate_min",
    "trace_degrees",
    "tridiag_eigenvalues",
]
