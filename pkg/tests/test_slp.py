import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from scipy.optimize import brentq

from warped_rigidity.benchmarks import characteristic, constant_coefficient_eigenvalues
from warped_rigidity.geometry import AdsSchwarzschildWarp, ConstantWarp
from warped_rigidity.slp import (MixedProblem, count_below, find_eigenvalues, lower_bound,
                                 mismatch, rayleigh_quotient, sampled, shoot, shoot_backward)


def unit_problem(**kw):
    args = dict(n=3, r1=0.0, r2=1.0, alpha=ConstantWarp(1.0), beta=0.0, G=0.0, J1=0.0, J2=0.0)
    args.update(kw)
    return MixedProblem(**args)


def free_roots(count):
    """Roots of w [(w^2 - 1) sin w - 2 w cos w] on the unit interval, mu = w^2."""
    g = lambda w: (w * w - 1) * math.sin(w) - 2 * w * math.cos(w)
    ws = np.linspace(1e-3, 40, 40001)
    vals = [g(w) for w in ws]
    roots = [0.0]
    for a, b, fa, fb in zip(ws, ws[1:], vals, vals[1:]):
        if fa * fb < 0:
            roots.append(brentq(g, a, b, xtol=1e-15) ** 2)
    return roots[:count]


def test_free_problem_matches_hand_derived_roots():
    got = [e.value for e in find_eigenvalues(unit_problem(), 5)]
    want = free_roots(5)
    assert abs(got[0]) < 1e-12
    np.testing.assert_allclose(got[1:], want[1:], rtol=1e-10)


def test_benchmark_oracle_agrees_with_hand_derived_roots():
    np.testing.assert_allclose(constant_coefficient_eigenvalues(5)[1:], free_roots(5)[1:],
                               rtol=1e-12)


@settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(length=st.floats(0.4, 2.5), shift=st.floats(-3, 3), J1=st.floats(-3, 3),
       J2=st.floats(-3, 3))
def test_constant_coefficient_oracle(length, shift, J1, J2):
    problem = unit_problem(r2=length, G=-shift, J1=J1, J2=J2)
    got = [e.value for e in find_eigenvalues(problem, 4)]
    want = constant_coefficient_eigenvalues(4, length, shift, J1, J2)
    for g, w in zip(got, want):
        assert abs(g - w) <= 1e-8 * max(1.0, abs(w))


def test_shoot_matches_closed_form():
    mu = 7.3
    w = math.sqrt(mu)
    sol = shoot(unit_problem(J1=0.4), mu)
    r = sol.grid
    exact = np.cos(w * r) - (0.4 + mu) * np.sin(w * r) / w
    np.testing.assert_allclose(sol.values, exact, atol=1e-9)
    d_exact = -w * np.sin(w * r) - (0.4 + mu) * np.cos(w * r)
    np.testing.assert_allclose(sol.derivative_values, d_exact, atol=1e-8)


def test_shoot_backward_matches_closed_form():
    problem = unit_problem(J2=-0.6)
    sol = shoot_backward(problem, 2.0)
    w = math.sqrt(2.0)
    x = sol.grid - 1.0
    exact = np.cos(w * x) + (-0.6 + 2.0) * np.sin(w * x) / w
    assert sol.grid[0] == 1.0 and sol.grid[-1] == 0.0
    np.testing.assert_allclose(sol.values, exact, atol=1e-9)


def test_mismatch_scalar_and_array():
    problem = unit_problem(J1=-1.0, J2=0.5)
    trials = np.array([-0.5, 0.3, 4.0])
    arr = mismatch(problem, trials)
    assert arr.shape == (3,)
    for t, v in zip(trials, arr):
        assert mismatch(problem, float(t)) == pytest.approx(v, rel=1e-12)
        assert v == pytest.approx(float(characteristic(t, 1.0, 0.0, -1.0, 0.5)), rel=1e-8)


def test_count_below_matches_oracle():
    problem = unit_problem(J1=-1.0, J2=0.5, G=-0.3)
    roots = constant_coefficient_eigenvalues(6, 1.0, 0.3, -1.0, 0.5)
    for trial in [-5.0, 0.0, 10.0, 50.0, 150.0]:
        assert count_below(problem, trial) == sum(r < trial for r in roots)
    assert list(count_below(problem, np.array([-5.0, 50.0]))) == [
        sum(r < -5.0 for r in roots), sum(r < 50.0 for r in roots)]


def test_window_search():
    problem = unit_problem(J1=-1.0, J2=0.5)
    roots = constant_coefficient_eigenvalues(6, 1.0, 0.0, -1.0, 0.5)
    pairs = find_eigenvalues(problem, 2, window=(roots[2] - 1.0, 200.0))
    np.testing.assert_allclose([p.value for p in pairs], roots[2:4], rtol=1e-9)
    assert [p.radial_index for p in pairs] == [3, 4]
    assert find_eigenvalues(problem, 2, window=(roots[1] + 1e-3, roots[2] - 1e-3)) == []


def test_large_fiber_eigenvalue_overflow_regime():
    # two boundary-localized modes near sqrt(beta), one per end
    beta = 160000.0
    problem = unit_problem(beta=beta, J2=-1.0)
    got = find_eigenvalues(problem, 3)
    args = (1.0, beta, 0.0, -1.0)
    xs = np.concatenate([np.linspace(0.0, 1000.0, 100001), np.linspace(beta, beta + 20, 2001)])
    ys = np.sign(characteristic(xs, *args))
    want = [brentq(characteristic, a, b, args=args, xtol=1e-13)
            for a, b, fa, fb in zip(xs, xs[1:], ys, ys[1:]) if fa * fb < 0][:3]
    np.testing.assert_allclose([p.value for p in got], want, rtol=1e-10)
    assert [p.node_count for p in got] == [0, 1, 2]
    # the first mode is exp(-sqrt(beta - mu) r) to working precision
    first = got[0].solution
    kappa = math.sqrt(beta - want[0])
    mask = first.grid < 0.05
    np.testing.assert_allclose(first.values[mask], np.exp(-kappa * first.grid[mask]),
                               rtol=1e-6, atol=1e-12)


@pytest.mark.parametrize("G,J1,J2", [(0.0, 0.0, 0.0), (2.0, 1.0, -3.0), (-1.0, 2.5, 2.5),
                                     (lambda r: 1 + np.sin(6 * r), -1.0, 1.0)])
def test_node_counts_and_lower_bound(G, J1, J2):
    warp = AdsSchwarzschildWarp(1.0, 1.0, 0.0, 6.0)
    problem = MixedProblem(3, 0.0, 0.8 * warp.r_max, warp, 2.0, G, J1, J2)
    pairs = find_eigenvalues(problem, 5)
    assert [p.node_count for p in pairs] == [0, 1, 2, 3, 4]
    assert [p.radial_index for p in pairs] == [1, 2, 3, 4, 5]
    assert min(p.value for p in pairs) >= lower_bound(problem) - 1e-9
    assert all(b > a for a, b in zip([p.value for p in pairs], [p.value for p in pairs][1:]))


def test_lower_bound_value():
    problem = unit_problem(G=lambda r: 2 * np.sin(3 * r), J1=-1.0, J2=0.7)
    # sup of 2 sin(3r) on [0, 1] is 2, attained at r = pi/6
    assert lower_bound(problem) == pytest.approx(-2.7, abs=1e-6)


@pytest.mark.parametrize("G,J1,J2", [(0.0, 0.0, 0.0), (1.5, -2.0, 0.4),
                                     (lambda r: np.cos(4 * r), 0.5, -0.5)])
def test_rayleigh_quotient_of_eigenfunctions(G, J1, J2):
    problem = unit_problem(r2=1.4, G=G, J1=J1, J2=J2, beta=2.0, alpha=ConstantWarp(1.3))
    for p in find_eigenvalues(problem, 4):
        assert rayleigh_quotient(problem, p.solution) == pytest.approx(p.value, abs=1e-8)


def test_rayleigh_quotient_of_explicit_trial():
    # f = 1 on the free unit interval: numerator 0
    grid = np.linspace(0, 1, 11)
    trial = sampled(grid, np.ones(11), np.zeros(11))
    assert rayleigh_quotient(unit_problem(), trial) == 0.0
    # f = r: int f'^2 = 1, boundary mass f(1)^2 = 1, int f^2 = 1/3
    trial = sampled(grid, grid, np.ones(11))
    assert rayleigh_quotient(unit_problem(), trial) == pytest.approx(1 / (1 / 3 + 1), rel=1e-13)


def test_rayleigh_rejects_bad_trials():
    grid = np.linspace(0, 1, 5)
    with pytest.raises(ZeroDivisionError):
        rayleigh_quotient(unit_problem(), sampled(grid, np.zeros(5), np.zeros(5)))
    with pytest.raises(ValueError):
        rayleigh_quotient(unit_problem(), sampled(grid * 0.5, np.ones(5), np.zeros(5)))


@pytest.mark.parametrize("kw", [dict(r2=0.0), dict(beta=-1.0)])
def test_problem_validation(kw):
    with pytest.raises(ValueError):
        unit_problem(**kw)


def test_count_must_be_positive():
    with pytest.raises(ValueError):
        find_eigenvalues(unit_problem(), 0)
