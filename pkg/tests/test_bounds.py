import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dame.bounds import (
    C1,
    C2,
    C3,
    C5,
    TRIVIAL_RISK,
    BoundConstants,
    MTildeSearch,
    lower_bound,
    lower_bound_at,
    lower_bound_terms,
    m_tilde_linear_scan,
    m_tilde_search,
    phi,
    psi,
    risk_bounds,
    solve_m_tilde,
    toy_regimes,
    two_point_divergences,
    upper_bound,
    upper_bound_at,
    upper_bound_expression,
)
from dame.distributions import PointMass, TruncatedBinomial, TwoSpike, UniformOdd, ZeroTruncatedPoisson
from dame.mechanisms import keep_probability


def test_constants():
    k = BoundConstants()
    assert k.c1 == pytest.approx(math.exp(-9) / 16)
    assert (k.c2, k.c3, k.c4, k.c5) == (24.0, 1570.0, 8.0, 868.5)


def test_phi_examples():
    assert phi(1, 500.0) == pytest.approx(float(oracles.phi(1, 500)), rel=1e-13)
    assert phi(1, 500.0) == pytest.approx(10.732, abs=1e-3)
    # phi(1) -> 0 as n alpha^2 grows; at 1e8 it is 868.5e-8 ln(8e8 / ln 8e8)
    assert phi(1, 1e8) == pytest.approx(1.5181112010735e-4, rel=1e-10)
    assert phi(1, 1e10) < 1e-5
    assert np.all(np.diff(phi(1, np.geomspace(1e2, 1e12, 50))) < 0)
    a = np.unique(np.geomspace(1, 1e6, 300).astype(int))
    assert np.all(phi(2 * a, 500.0) >= phi(a, 500.0))
    with pytest.raises(ValueError):
        phi(1, 0.0)


def test_psi_at_one_is_nonnegative():
    for dist in (PointMass(3), ZeroTruncatedPoisson(5.0), TwoSpike(1, 9, 0.1)):
        for x in (0.01, 1.0, 500.0, 1e7):
            assert psi(dist, 1, x) >= 0


# (distribution, oracle table, n alpha^2, frozen m_tilde, frozen upper bound); frozen
# values come from the 40-digit oracle in tests/oracles.py
FROZEN = [
    (PointMass(50), oracles.point_mass_table(50), 3600.0, 50, 0.070909901346595195),
    (PointMass(50), oracles.point_mass_table(50), 0.5, 50, 4.0),
    (TwoSpike(1000, 10000, 0.5), oracles.two_spike_table(1000, 10000, 0.5), 3951.0204081632655, 1000,
     0.0038441888253203314),
    (TwoSpike(1, 100, 0.5), oracles.two_spike_table(1, 100, 0.5), 500.0, 1, 4.0),
    (TwoSpike(1, 100, 0.5), oracles.two_spike_table(1, 100, 0.5), 1e4, 1, 1.0494840412438646),
    (UniformOdd(100.0), oracles.uniform_odd_table(100.0), 1e5, 126, 0.0020401856545437408),
    (TwoSpike(10, 1000, 0.9), oracles.two_spike_table(10, 1000, 0.9), 1e5, 1000, 0.00021404368559884010),
]


@pytest.mark.parametrize("dist,table,x,m_tilde,upper", FROZEN)
def test_frozen_m_tilde_and_upper(dist, table, x, m_tilde, upper):
    res = m_tilde_search(dist, x)
    assert res.m_tilde == m_tilde
    assert oracles.m_tilde_brute(table, x) == m_tilde
    value, mt = upper_bound_at(dist, x)
    assert mt == m_tilde
    assert value == pytest.approx(upper, rel=1e-12)


def test_solver_examples():
    assert solve_m_tilde(PointMass(50), 10_000, 0.6) == 50
    # rho^2 >= phi(m) forces m_tilde = m for the two-spike law
    x = 1e6
    m = 400
    rho = math.sqrt(phi(m, x)) * 1.01
    assert rho < 1
    assert solve_m_tilde(TwoSpike(1, m, rho), 10**6, 1.0) == m


def test_solver_bracket_fallback():
    res = m_tilde_search(PointMass(50), 0.5)
    assert res.fallback and res.m_tilde == 50
    assert res.psi_at >= 0 > res.psi_next


@settings(max_examples=40, deadline=None)
@given(m1=st.integers(1, 300), m2=st.integers(1, 3000), rho=st.floats(0, 1),
       x=st.floats(0.05, 2e4))
def test_binary_search_equals_linear_scan(m1, m2, rho, x):
    dist = TwoSpike(m1, m2, rho)
    res = m_tilde_search(dist, x)
    assert res.m_tilde == m_tilde_linear_scan(dist, x, dist.support_max + 1)
    assert res.m_tilde == oracles.m_tilde_brute_arrays(dist.values, dist.probs, x, dist.support_max + 1)
    assert res.iterations <= MTildeSearch.iteration_budget(x)


def test_m_tilde_over_n_alpha_sq_is_bounded():
    # only a limit statement: a law with all mass above x has m_tilde/x >> 1
    for dist in (ZeroTruncatedPoisson(5.0), ZeroTruncatedPoisson(1e5), UniformOdd(5e4),
                 TruncatedBinomial(500.0), PointMass(10**4)):
        ratios = [m_tilde_search(dist, x).m_tilde / x for x in (1e3, 1e4, 1e5)]
        assert ratios[-1] <= 1.01


def test_lower_bound_item_level():
    value, a = lower_bound(PointMass(1), 500, 1.0)
    assert value == pytest.approx(C1 / 500, rel=1e-12)
    assert value == pytest.approx(1.543e-8, rel=1e-3)
    assert a == 1
    # the a = 0 term
    t0 = lower_bound_terms(PointMass(1), 500.0, [0])[0]
    assert t0 == pytest.approx(C1 * math.exp(-C2 * 500.0))


@pytest.mark.parametrize("dist,table", [
    (TwoSpike(1, 100, 0.5), oracles.two_spike_table(1, 100, 0.5)),
    (TwoSpike(7, 60, 0.05), oracles.two_spike_table(7, 60, 0.05)),
    (UniformOdd(30.0), oracles.uniform_odd_table(30.0)),
    (PointMass(9), oracles.point_mass_table(9)),
])
@pytest.mark.parametrize("x", [0.3, 5.0, 500.0])
def test_lower_bound_matches_exhaustive_oracle(dist, table, x):
    a_max = dist.support_max + 3
    value, a = lower_bound_at(dist, x, a_max)
    ref, ref_a = oracles.lower(table, x, a_max)
    assert value == pytest.approx(float(ref), rel=1e-11)
    # the oracle keeps the first maximiser; ties between equal terms do not matter
    assert lower_bound_terms(dist, x, [ref_a])[0] == pytest.approx(value, rel=1e-11)


def test_lower_bound_two_spike_reproduces_both_terms():
    rho, m, x = 0.3, 400, 800.0
    dist = TwoSpike(1, m, rho)
    value, _ = lower_bound_at(dist, x)
    t0 = C1 * math.exp(-C2 * x * rho**2)
    tm = C1 / max(x * ((1 - rho) + rho * math.sqrt(m)) ** 2, 1)
    t_zero = C1 * math.exp(-C2 * x)
    assert value == pytest.approx(max(t_zero, t0 / max(x * (1 - rho) ** 2, 1), tm), rel=1e-12)


def test_upper_bound_examples():
    value, mt = upper_bound(PointMass(1), 500, 1.0)
    assert (value, mt) == (4.0, 1)
    raw = upper_bound_expression(PointMass(1), 500.0, 1)
    assert raw == pytest.approx(1570 * math.log(8 * math.sqrt(500)) / 500, rel=1e-13)
    assert raw == pytest.approx(16.29, abs=0.01)
    value, mt = upper_bound(PointMass(100), 10_000, 0.6)
    assert mt == 100
    assert value == pytest.approx(C3 * math.log(8 * math.sqrt(100 * 3600)) / (3600 * 100), rel=1e-12)


@pytest.mark.parametrize("dist", [PointMass(1), PointMass(300), ZeroTruncatedPoisson(5.0),
                                  TwoSpike(1, 1000, 0.2), UniformOdd(50.0), TruncatedBinomial(40.0)],
                         ids=lambda d: d.kind)
def test_upper_bound_nonincreasing_in_n_alpha_sq(dist):
    xs = np.geomspace(1e2, 1e8, 60)
    ub = [upper_bound_at(dist, x)[0] for x in xs]
    assert max(ub) <= TRIVIAL_RISK
    assert np.all(np.diff(ub) <= 1e-15)


def test_upper_over_lower_grows_like_log():
    # uncapped: with the cap at 4 the ratio is linear in x while the bound is vacuous
    xs = [1e3, 1e4, 1e5]
    ratios = [upper_bound_expression(PointMass(1), x, 1) / lower_bound_at(PointMass(1), x)[0] for x in xs]
    c = ratios[0] / math.log(xs[0])
    for x, r in zip(xs, ratios):
        assert r <= 1.5 * c * math.log(x)


@pytest.mark.parametrize("family", [ZeroTruncatedPoisson, UniformOdd, TruncatedBinomial])
def test_lower_below_upper_on_grid(family):
    for lam in np.geomspace(5, 500, 25):
        b = risk_bounds(family(float(lam)), 500.0)
        assert b.lower <= b.upper


def test_toy_regimes_item_and_full():
    n, alpha = 10_000, 0.6
    x = n * alpha**2
    r = toy_regimes(0.0, 1000, n, alpha)
    assert r.label == "item_level" and r.a == 1
    assert r.value == pytest.approx(C3 * math.log(8 * math.sqrt(x)) / x)
    r = toy_regimes(1.0, 100, n, alpha)
    assert phi(2, x) > 1
    assert r.label == "full" and r.a == 100 == solve_m_tilde(PointMass(100), n, alpha)
    assert r.value == pytest.approx(C3 * math.log(8 * math.sqrt(100 * x)) / (100 * x))
    with pytest.raises(ValueError):
        toy_regimes(0.5, 100, 1, 0.5)


def test_toy_intermediate_matches_general_bound():
    n, alpha, m = 10**6, 1.0, 5000
    x = float(n)
    seen = 0
    for a in (2, 10, 100, 1000, 4000):
        lo, hi = phi(a, x), phi(a + 1, x)
        for rho in np.sqrt(np.linspace(lo, hi, 7)[1:-1]):
            r = toy_regimes(float(rho), m, n, alpha)
            assert r.label == "intermediate" and r.a == a
            dist = TwoSpike(1, m, float(rho))
            assert solve_m_tilde(dist, n, alpha) == a
            general = upper_bound_expression(dist, x, a)
            expected = min(general, math.exp(-rho**2 * x / C5) / rho**2)
            assert r.value == pytest.approx(expected, rel=1e-10)
            seen += 1
    assert seen == 25


def test_two_point_divergences():
    assert two_point_divergences(0.0) == (0.0, 0.0)
    tv, kl = two_point_divergences(0.5)
    assert tv == 0.5
    assert kl == pytest.approx(0.5 * math.log(3), rel=1e-14)
    assert kl <= 0.75
    for d in np.linspace(0, 0.5, 100):
        tv, kl = two_point_divergences(float(d))
        assert kl == pytest.approx(float(oracles.kl_two_point(d)), rel=1e-12, abs=1e-300)
        assert kl <= 3 * d * d
    with pytest.raises(ValueError):
        two_point_divergences(0.6)


def test_keep_probability_gap_inequality():
    for alpha in np.linspace(1e-4, 1.0, 200):
        assert (0.5 - keep_probability(alpha)) ** 2 >= alpha**2 / 579
