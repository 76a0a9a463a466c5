"""Acceptance suite: each test carries the number of the criterion it checks.

Run ``pytest tests/test_acceptance.py`` for one PASS/FAIL line per criterion
at the end of the session (see conftest.py). A criterion passes only if every
one of its checks passes; published entries shown to be inaccurate by an
independent evaluation are strict xfails and make their criterion FAIL.
"""
import json
import math

import numpy as np
import pytest

from lagtail.analytic import MPLaw, j_rate_bound, ldp_rate, sharp_log_tail_max, tw_log_tail
from lagtail.ensemble import EnsembleParams, Side, TailQuery
from lagtail.estimators import EstimateAccumulator, make_plan, merge, report_from_accumulator, run_estimate
from lagtail.harness.cli import main
from lagtail.numerics import log_reg_lower_inc_gamma, log_reg_upper_inc_gamma
from lagtail.sampler import RngStream, sample_factor_rows, spectra_from_factors

from oracles import three_figures, two_eigenvalue_tail
from published_tables import TW_KNOWN_DEVIATIONS, rows

CRITERIA = {
    1: "IS reproduces the n=10 published rows",
    2: "IS reproduces the n=50 published rows",
    3: "closed-form tail matches every printed TA entry",
    4: "Tracy-Widom tail within 5% of every printed TW entry",
    5: "DMC at 1e6 agrees with printed DMC and with IS",
    6: "n=1 estimators match the incomplete-gamma tails",
    7: "n=2 estimator matches 2-D quadrature",
    8: "sampler trace law and eigenvalue/singular-value identity",
    9: "rate function zero at the edge, bound is its derivative",
    10: "relative error stays bounded as p grows",
    11: "byte-identical reruns, sharded equals unsharded",
}

SEED = 0
N_IS = 10**4

# Rows where the seed-0 run misses the printed Est by more than 3 standard
# errors although it is within 1.7 of a 1e6-replicate IS reference. The printed
# Est is itself 2-4 standard errors (N = 1e4) below that reference, and the 3-se
# band ignores the published run's own error. Keys: (n, p, x).
EST_KNOWN_DEVIATIONS = {
    (10, 100, 1.9): "printed 1.01e-02 is 2.0 se below the reference 1.0244e-02; seed 0 is 1.7 se above it",
    (10, 1000, 1.3): "printed 2.07e-04 is 2.2 se below the reference 2.0961e-04; seed 0 is 1.1 se above it",
    (10, 1000, 2.0): "printed 1.88e-59 is 4.0 se below the reference 1.8903e-59; seed 0 is 1.2 se above it",
}


def _row_id(r):
    return f"n{r['n']}-p{r['p']}-x{r['x']}"


def _est_cases(n):
    out = []
    for r in rows(n=n):
        key = (r["n"], r["p"], r["x"])
        marks = [pytest.mark.criterion(1 if n == 10 else 2)]
        if key in EST_KNOWN_DEVIATIONS:
            marks.append(pytest.mark.xfail(strict=True, reason=EST_KNOWN_DEVIATIONS[key]))
        out.append(pytest.param(r, marks=marks, id=_row_id(r)))
    return out


_IS_CACHE = {}


def _is_run(n, p, x):
    key = (n, p, x)
    if key not in _IS_CACHE:
        _IS_CACHE[key] = run_estimate(EnsembleParams(n, p, 1.0), TailQuery(Side.MAX, x), "is-max", N_IS, seed=SEED)
    return _IS_CACHE[key]


def _check_row(r):
    rep = _is_run(r["n"], r["p"], r["x"])
    # printed (Est, Std) consistency: our relative error matches the printed one
    assert rep.std_over_est == pytest.approx(r["std"] / r["est"], rel=0.25)
    gap = abs(rep.estimate - r["est"])
    assert gap <= 3 * rep.std_error, (
        f"estimate {rep.estimate:.4e} vs printed {r['est']:.3e}: {gap / rep.std_error:.2f} standard errors"
    )


# ---------------------------------------------------------------- 1, 2


@pytest.mark.parametrize("r", _est_cases(10))
def test_is_rows_n10(r):
    _check_row(r)


@pytest.mark.criterion(1)
def test_is_example_relative_error():
    rep = _is_run(10, 100, 2.0)
    assert rep.std_over_est == pytest.approx(0.58, rel=0.25)


@pytest.mark.parametrize("r", _est_cases(50))
def test_is_rows_n50(r):
    _check_row(r)


# ---------------------------------------------------------------- 3


@pytest.mark.criterion(3)
@pytest.mark.parametrize("r", rows(field="ta"), ids=_row_id)
def test_ta_column(r):
    v = math.exp(sharp_log_tail_max(EnsembleParams(r["n"], r["p"], 1.0), r["x"]))
    assert r["ta"] in three_figures(v), f"computed {v:.5e}, printed {r['ta']:.2e}"


# ---------------------------------------------------------------- 4


def _tw_cases():
    out = []
    for r in rows(field="tw_classic"):
        for c, field in (("classic", "tw_classic"), ("refined", "tw_refined")):
            marks = [pytest.mark.criterion(4)]
            known = TW_KNOWN_DEVIATIONS.get((r["n"], r["p"], r["x"], c))
            if known:
                marks.append(pytest.mark.xfail(strict=True, reason=known))
            out.append(pytest.param(r, c, r[field], marks=marks, id=f"{_row_id(r)}-{c}"))
    return out


@pytest.mark.parametrize("r,centering,printed", _tw_cases())
def test_tw_column(r, centering, printed):
    v = math.exp(tw_log_tail(EnsembleParams(r["n"], r["p"], 1.0), r["x"], centering))
    assert abs(v / printed - 1) < 0.05, f"computed {v:.4e}, printed {printed:.3e}"


# ---------------------------------------------------------------- 5


@pytest.mark.criterion(5)
@pytest.mark.parametrize("r", rows(n=10, field="dmc"), ids=_row_id)
def test_dmc_cross_check(r):
    N = 10**6
    d = run_estimate(EnsembleParams(r["n"], r["p"], 1.0), TailQuery(Side.MAX, r["x"]), "dmc", N, seed=SEED)
    printed = r["dmc"]
    printed_se = math.sqrt(printed * (1 - printed) / N)
    assert abs(d.estimate - printed) <= 3 * math.hypot(d.std_error, printed_se)
    s = _is_run(r["n"], r["p"], r["x"])
    assert abs(d.estimate - s.estimate) <= 3 * math.hypot(d.std_error, s.std_error)


# ---------------------------------------------------------------- 6


def _n1_cases():
    out = []
    for beta in (1.0, 2.0):
        for c in (1.5, 2.0, 3.0):
            for m in ("is-max", "is-max-gamma"):
                out.append(pytest.param(beta, Side.MAX, c * beta, m, id=f"b{beta:g}-x{c:g}b-{m}"))
        for c in (0.3, 0.5, 0.8):
            out.append(pytest.param(beta, Side.MIN, c * beta, "is-min", id=f"b{beta:g}-y{c:g}b-is-min"))
    return out


@pytest.mark.criterion(6)
@pytest.mark.parametrize("beta,side,t,method", _n1_cases())
def test_single_eigenvalue_oracle(beta, side, t, method):
    # thresholds are multiples of beta, the bulk location of lambda / p
    p = 200
    if side is Side.MAX:
        exact = math.exp(log_reg_upper_inc_gamma(beta * p / 2, p * t / 2))
    else:
        exact = math.exp(log_reg_lower_inc_gamma(beta * p / 2, p * t / 2))
    rep = run_estimate(EnsembleParams(1, p, beta), TailQuery(side, t), method, 10**5, seed=SEED)
    assert abs(rep.estimate - exact) <= 3 * rep.std_error


# ---------------------------------------------------------------- 7


@pytest.mark.criterion(7)
def test_two_eigenvalue_quadrature():
    exact = two_eigenvalue_tail(30, 1.0, 2.5)
    rep = run_estimate(EnsembleParams(2, 30, 1.0), TailQuery(Side.MAX, 2.5), "is-max", 10**5, seed=SEED)
    assert abs(rep.estimate - exact) <= 3 * rep.std_error


# ---------------------------------------------------------------- 8


@pytest.mark.criterion(8)
def test_sampler_laws():
    n, p, count = 10, 100, 10**4
    d2, s2 = sample_factor_rows(n, p, 1.0, RngStream(SEED).generator, count)
    lam = spectra_from_factors(d2, s2)
    tr = lam.sum(axis=1)
    assert abs(tr.mean() - p * n) <= 4 * math.sqrt(2 * p * n / count)
    assert tr.var(ddof=1) == pytest.approx(2 * p * n, rel=0.10)
    b = np.zeros((count, n, n))
    idx = np.arange(n)
    b[:, idx, idx] = np.sqrt(d2)
    b[:, idx[1:], idx[:-1]] = np.sqrt(s2)
    sv2 = np.linalg.svd(b, compute_uv=False) ** 2
    assert np.all(np.abs(lam - sv2) <= 1e-10 * lam)


# ---------------------------------------------------------------- 9


LAWS = [(1.0, 10.0), (1.0, 100.0), (2.0, 2.0), (0.5, 20.0)]


@pytest.mark.criterion(9)
@pytest.mark.parametrize("beta,gamma", LAWS)
def test_rate_function(beta, gamma):
    law = MPLaw(beta, gamma)
    assert abs(ldp_rate(law, law.x_star_upper)) <= 1e-6
    for x in np.linspace(1.05 * law.x_star_upper, 5 * law.x_star_upper, 20):
        h = 1e-4 * x
        # ldp_rate(x) is I at gamma x, so d/dx carries a factor gamma
        fd = 2.0 * (ldp_rate(law, x + h) - ldp_rate(law, x - h)) / (2 * h) / gamma
        assert j_rate_bound(law, x) == pytest.approx(fd, rel=1e-4)


# ---------------------------------------------------------------- 10


@pytest.mark.criterion(10)
def test_relative_error_bounded_in_p():
    reps = {p: run_estimate(EnsembleParams(10, p, 1.0), TailQuery(Side.MAX, 2.0), "is-max", N_IS, seed=SEED)
            for p in (100, 1000, 10000)}
    assert reps[10000].std_over_est <= 2 * reps[100].std_over_est
    for rep in reps.values():
        assert 0.8 <= rep.efficiency_ratio <= 1.2


# ---------------------------------------------------------------- 11


@pytest.mark.criterion(11)
def test_cli_reruns_are_byte_identical(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"rows": [
        {"n": 10, "p": 100, "x": 2.0, "methods": ["is", "dmc", "ta", "tw"], "reps": 3000},
        {"n": 5, "p": 50, "x": 2.5, "methods": ["is"], "reps": 2500},
    ]}))
    runs = {
        "estimate": ["estimate", "--n", "10", "--p", "100", "--beta", "1", "--x", "2", "--reps", "5000", "--seed", "3"],
        "estimate-w2": ["estimate", "--n", "10", "--p", "100", "--beta", "1", "--x", "2", "--reps", "5000",
                        "--seed", "3", "--workers", "2"],
        "table": ["table", "--spec", str(spec), "--seed", "4"],
        "sample": ["sample", "--n", "6", "--p", "20", "--beta", "0.5", "--count", "500", "--seed", "5"],
    }
    for name, args in runs.items():
        a, b = tmp_path / f"{name}-a", tmp_path / f"{name}-b"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes(), name


@pytest.mark.criterion(11)
@pytest.mark.parametrize("method,side,t", [("is-max", Side.MAX, 2.0), ("is-max-gamma", Side.MAX, 2.2),
                                          ("is-min", Side.MIN, 0.5), ("dmc", Side.MAX, 1.2)])
def test_sharded_equals_unsharded(method, side, t):
    prm = EnsembleParams(10, 100, 1.0)
    plan = make_plan(prm, TailQuery(side, t), method, seed=SEED)
    n = 4321
    whole = plan.accumulate(0, n)
    edges = [0, 1, 999, 1000, 2500, 3001, n]
    merged = EstimateAccumulator.empty(plan.key)
    for a, b in zip(edges, edges[1:]):
        merged = merge(merged, plan.accumulate(a, b))
    assert merged == whole
    args = (prm, plan.query, plan.method, plan.seed, plan.rate)
    assert report_from_accumulator(merged, *args) == report_from_accumulator(whole, *args)
