import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inexact_newton.spectral_filters import (FilterKind, check_filter_inequalities,
                                             cumulative_times, g, r)

KINDS = list(FilterKind)
LAMBDAS = np.array([0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 0.1, 0.5, 1.0])
TIMES = [1, 2, 5, 10, 1e3, 1e6]


def test_kind_parsing():
    assert FilterKind.parse("Tikhonov") is FilterKind.TIKHONOV
    assert FilterKind.parse(FilterKind.IMPLICIT) is FilterKind.IMPLICIT
    assert FilterKind.LANDWEBER.discrete_t and FilterKind.IMPLICIT.discrete_t
    assert not FilterKind.ASYMPTOTIC.discrete_t and not FilterKind.TIKHONOV.discrete_t
    with pytest.raises(ValueError):
        FilterKind.parse("cg")


def test_g_examples():
    assert g("landweber", 3, 0.5) == pytest.approx(1.75, rel=1e-15)
    assert g("implicit", 2, 1.0) == pytest.approx(0.75, rel=1e-15)
    assert g("tikhonov", 1, 1.0) == pytest.approx(0.5, rel=1e-15)
    assert g("asymptotic", 2, 0.0) == 2.0


def test_r_examples():
    assert r("landweber", 3, 0.5) == pytest.approx(0.125, rel=1e-15)
    assert r("implicit", 2, 1.0) == pytest.approx(0.25, rel=1e-15)
    assert r("asymptotic", 2, 0.5) == pytest.approx(math.exp(-1), rel=1e-15)
    assert r("asymptotic", 2, 0.5) == pytest.approx(0.367879, abs=1e-6)


def test_small_lambda_limits():
    for kind in KINDS:
        assert g(kind, 7.0, 0.0) == 7.0
        assert g(kind, 7.0, 1e-14) == pytest.approx(7.0, rel=1e-12)
    assert g("landweber", 3.7, 0.0) == 3.0
    assert g("implicit", 3.7, 1e-15) == pytest.approx(3.0, rel=1e-12)


def test_discrete_kinds_floor_t():
    assert r("landweber", 2.9, 0.5) == r("landweber", 2, 0.5)
    assert g("implicit", 0.5, 0.3) == 0.0
    assert r("landweber", 0.5, 1.0) == 1.0


def test_argument_errors():
    with pytest.raises(ValueError):
        g("tikhonov", 0.0, 0.5)
    with pytest.raises(ValueError):
        r("tikhonov", -1.0, 0.5)
    with pytest.raises(ValueError):
        g("landweber", 1.0, 1.5)
    with pytest.raises(ValueError):
        r("asymptotic", 1.0, -0.1)


@pytest.mark.parametrize("kind", KINDS)
def test_identity_grid(kind):
    for t in TIMES:
        err = np.abs(r(kind, t, LAMBDAS) - (1 - LAMBDAS * g(kind, t, LAMBDAS)))
        assert err.max() <= 1e-12


@pytest.mark.parametrize("kind", KINDS)
def test_range_and_monotonicity(kind):
    lam = LAMBDAS[1:]
    prev = np.ones_like(lam)
    for t in [0.5, 1, 1.5, 2, 3, 7.5, 20, 100]:
        rt = r(kind, t, lam)
        assert np.all((0 <= rt) & (rt <= 1))
        assert np.all(g(kind, t, LAMBDAS) >= 0)
        assert np.all(rt <= prev)
        if not kind.discrete_t:
            assert np.all(rt < prev)
        prev = rt


def test_vectorized_shape():
    out = g("tikhonov", 2.0, np.array([[0.0, 0.5], [1.0, 0.25]]))
    assert out.shape == (2, 2)
    assert isinstance(r("implicit", 2.0, 0.5), float)


def test_cumulative_times():
    np.testing.assert_array_equal(cumulative_times([1, 2, 3]), [0, 1, 3, 6])


def test_inequality_examples():
    rep = check_filter_inequalities("landweber", [1, 1], 1.0, [0.5], 0, 2)
    # lhs 0.125 against rhs 0.5
    assert rep.slack_g1 == pytest.approx(0.125 - 0.5)
    assert rep.passed
    rep = check_filter_inequalities("tikhonov", [2.0], 1.0, np.linspace(0, 1, 101), 0, 1)
    assert rep.slack_g3 <= 0
    for kind in KINDS:
        rep = check_filter_inequalities(kind, [3, 1, 2], 0.0, LAMBDAS, 0, 3)
        assert rep.slack_g1 <= 0


def test_inequality_argument_errors():
    with pytest.raises(ValueError):
        check_filter_inequalities("tikhonov", [1.0], 1.5, [0.5], 0, 1)
    with pytest.raises(ValueError):
        check_filter_inequalities("tikhonov", [1.0, 2.0], 0.5, [0.5], 1, 1)


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(KINDS),
       st.lists(st.floats(0.05, 50), min_size=1, max_size=8),
       st.floats(0, 1), st.data())
def test_inequalities_property(kind, ts, nu, data):
    ts = np.array(ts)
    if kind.discrete_t:
        ts = np.maximum(np.round(ts), 1.0)
    n = data.draw(st.integers(1, ts.size))
    j = data.draw(st.integers(0, n - 1))
    lam = np.concatenate([[0.0, 1.0], np.geomspace(1e-10, 1, 25)])
    assert check_filter_inequalities(kind, ts, nu, lam, j, n).passed
