import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lagtail.ensemble import (
    EnsembleError,
    EnsembleParams,
    Regime,
    Side,
    Spectrum,
    TailQuery,
    mp_upper_edge,
    validate,
)


def test_params_invariants():
    prm = EnsembleParams(10, 100, 1)
    assert prm.gamma == 10.0
    assert prm.reduced() == EnsembleParams(9, 99, 1.0)
    for bad in [(0, 5, 1.0), (5, 4, 1.0), (2, 3, 0.0), (2, 3, -1.0), (2.5, 3, 1.0), (2, 3, float("inf"))]:
        with pytest.raises(EnsembleError):
            EnsembleParams(*bad)


def test_spectrum_from_unsorted_sorts_descending():
    s = Spectrum.from_unsorted([1.0, 3.0, 2.0])
    assert s.values.tolist() == [3.0, 2.0, 1.0]
    assert len(s) == 3 and s[0] == 3.0
    with pytest.raises(ValueError):
        s.values[0] = 5.0


@pytest.mark.parametrize("vals", [[2.0, 2.0, 1.0], [3.0, 1.0, 0.0], [3.0, -1.0], [1.0, float("nan")]])
def test_spectrum_rejects_ties_and_nonpositive(vals):
    with pytest.raises(EnsembleError):
        Spectrum.from_unsorted(vals)


def test_validate_examples():
    p1 = EnsembleParams(10, 100, 1.0)
    assert validate(p1, TailQuery(Side.MAX, 2.0), Regime.P_OVER_N_INFTY) == []
    v = validate(p1, TailQuery(Side.MAX, 1.0), Regime.P_OVER_N_INFTY)
    assert len(v) == 1 and "x must exceed beta" in v[0].message


def test_validate_min_side():
    p1 = EnsembleParams(10, 100, 1.0)
    assert validate(p1, TailQuery("min", 0.5), Regime.P_OVER_N_INFTY) == []
    v = validate(p1, TailQuery("min", 1.0), Regime.P_OVER_N_INFTY)
    assert v and "0 < y < beta" in v[0].message


def test_validate_gamma_regime_uses_bulk_edge():
    # gamma = 2: the bulk of lambda/p ends at 1 * (1 + sqrt(1/2))^2 ~ 2.914
    prm = EnsembleParams(10, 20, 1.0)
    assert mp_upper_edge(1.0, 2.0) == pytest.approx(2.9142135623730949)
    assert validate(prm, TailQuery(Side.MAX, 3.0), Regime.GAMMA_FINITE) == []
    v = validate(prm, TailQuery(Side.MAX, 2.5), Regime.GAMMA_FINITE)
    assert v and v[0].bound == "x>x_star"


@given(
    st.integers(1, 50), st.integers(0, 200), st.floats(0.1, 8.0),
    st.sampled_from(["max", "min"]), st.floats(0.01, 20.0),
    st.sampled_from(list(Regime)),
)
def test_validate_deterministic_and_total(n, extra, beta, side, t, regime):
    prm = EnsembleParams(n, n + extra, beta)
    q = TailQuery(side, t)
    a = validate(prm, q, regime)
    assert a == validate(prm, q, regime)
    assert isinstance(a, list)


@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=30, unique=True))
def test_spectrum_sorted_strict(vals):
    s = Spectrum.from_unsorted(vals)
    assert np.all(np.diff(s.values) < 0)
    assert s.values[-1] > 0
