import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from warped_rigidity.errors import ConstraintError
from warped_rigidity.fiber import explicit, flat_torus, round_sphere
from warped_rigidity.geometry import (ConstantWarp, WarpedGeometry, ads_schwarzschild,
                                      areal_to_radial)
from warped_rigidity.slp import Eigenpair, MixedProblem, find_eigenvalues, sampled
from warped_rigidity.spectrum import (ConstraintConstants, admissibility_terms, admissible,
                                      admissible_ratio, assemble, compute_ab, cutoff_index,
                                      mark_admissible)


def unit_slab(fiber=None, length=1.0, c=1.0):
    return WarpedGeometry(3, 0.0, length, ConstantWarp(c), fiber or round_sphere(2))


# --- compute_ab ---------------------------------------------------------------

def test_compute_ab_mean_curvature_only():
    c = compute_ab(3, 0.0, -0.5, 10.0, 2.0)
    assert (c.a, c.b) == (0.0, 0.5)
    assert c.lam == pytest.approx(2.0 * -0.5 * 2 * 1 / 2)


def test_compute_ab_scalar_only():
    c = compute_ab(3, -6.0, 0.0, 10.0, 2.0)
    assert (c.a, c.b) == (0.1, 0.0)
    assert c.lam == pytest.approx(10.0 * -6.0 / 3)


def test_compute_ab_hand_solved_system():
    # a = (n-1) R b / (2 n H) = 2 b and a + b = 1
    c = compute_ab(3, -6.0, -1.0, 1.0, 1.0)
    assert c.a == pytest.approx(2 / 3, rel=1e-15)
    assert c.b == pytest.approx(1 / 3, rel=1e-15)
    assert 2 * c.b * -6.0 == pytest.approx(2 * 3 * c.a * -1.0, rel=1e-14)
    assert c.b * c.lam == pytest.approx(-1.0 * 2 * 1 / 2, rel=1e-14)
    assert c.a * c.lam == pytest.approx(-6.0 / 3, rel=1e-14)


def test_compute_ab_errors():
    with pytest.raises(ConstraintError):
        compute_ab(3, 0.0, 0.0, 1.0, 1.0)
    with pytest.raises(ConstraintError):
        compute_ab(3, 1.5, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        compute_ab(3, 1.0, 1.0, 0.0, 1.0)


# --- cutoff ---------------------------------------------------------------------

def test_cutoff_example():
    assert cutoff_index([0.0, 2.0, 6.0], alpha_max=2.0, sup_G=1.0) == 1


@pytest.mark.parametrize("values,alpha_max,sup_G,expected", [
    ([0.0, 2.0], 1.0, -1.0, 0),
    ([0.0, 2.0, 6.0, 12.0], 1.0, 6.0, 2),
    ([0.0, 1.0], 1.0, 0.0, 0),
])
def test_cutoff_cases(values, alpha_max, sup_G, expected):
    assert cutoff_index(values, alpha_max, sup_G) == expected


def test_cutoff_requires_enough_values():
    with pytest.raises(ValueError):
        cutoff_index([0.0, 2.0], 1.0, 5.0)


# --- assemble -------------------------------------------------------------------

def test_assemble_unit_example():
    geom = unit_slab()
    table = assemble(geom, 1.0, 0.0, 0.0, 0.0, 2, 2)
    first = table.entries[0]
    assert (first.fiber_index, first.radial_index) == (0, 1)
    assert abs(first.value) < 1e-10
    assert all(e.value > 0 for e in table.entries[1:])
    assert [e.value for e in table.entries] == sorted(e.value for e in table.entries)
    assert table.cutoff_i0 == 0
    assert {e.multiplicity for e in table.entries if e.fiber_index == 1} == {3}


def test_assemble_strictly_positive_when_signs_favour():
    geom = ads_schwarzschild()
    gamma = float(areal_to_radial(geom, [5.0])[0])
    table = assemble(geom, gamma, -0.2, 0.0, -0.1, 3, 3)
    assert min(e.value for e in table.entries) > 0
    assert min(e.value for e in table.entries) >= table.floor - 1e-9


def test_first_eigenvalue_ladder_and_floor():
    geom = ads_schwarzschild(E=1.0)
    gamma = float(areal_to_radial(geom, [3.0])[0])
    table = assemble(geom, gamma, -3.0, 0.0, 1.5, 5, 2)
    firsts = list(table.first_eigenvalues().values())
    assert len(firsts) == 5
    assert all(b >= a - 1e-9 for a, b in zip(firsts, firsts[1:]))
    assert min(e.value for e in table.entries) >= table.floor - 1e-9


def test_fast_mode_skips_only_provably_positive_modes():
    geom = unit_slab(explicit([(0, 1), (0.5, 2), (1.5, 1), (5.0, 3)], 2.0, 1.0))
    fast = assemble(geom, 1.0, 1.5, 0.0, -0.2, 4, 2, fast=True)
    assert fast.cutoff_i0 == 2
    assert fast.skipped_modes == [3]
    full = assemble(geom, 1.0, 1.5, 0.0, -0.2, 4, 2)
    assert all(e.value > 0 for e in full.entries if e.fiber_index > full.cutoff_i0)
    assert {e.fiber_index for e in fast.entries} == {0, 1, 2}


def test_assemble_is_deterministic_across_worker_counts():
    geom = unit_slab()
    one = assemble(geom, 0.8, 0.5, 0.0, -0.3, 4, 2, workers=1)
    many = assemble(geom, 0.8, 0.5, 0.0, -0.3, 4, 2, workers=4)
    assert [(e.fiber_index, e.radial_index, e.value) for e in one.entries] == \
        [(e.fiber_index, e.radial_index, e.value) for e in many.entries]


def test_assemble_validation():
    geom = unit_slab()
    with pytest.raises(ValueError):
        assemble(geom, 0.0, 0.0, 0.0, 0.0, 1, 1)
    with pytest.raises(ValueError):
        assemble(geom, 1.0, 0.0, 0.0, 0.0, 0, 1)


# --- admissibility ----------------------------------------------------------------

def constant_pair(geom, gamma, fiber_index=0):
    grid = np.linspace(geom.r1, gamma, 9)
    return Eigenpair(fiber_index, 1, 0.0, sampled(grid, np.ones(9), np.zeros(9)))


def test_nonconstant_fiber_modes_always_admissible():
    geom = unit_slab()
    pair = constant_pair(geom, 1.0, fiber_index=1)
    assert admissible(pair, compute_ab(3, 2.0, 0.0, 1.0, 1.0), geom, 1.0)
    assert admissible(pair, None, geom, 1.0)


def test_constant_function_inadmissible_with_positive_ab():
    geom = unit_slab()
    constants = ConstraintConstants(1.0, 1.0, math.nan, 1.0, 1.0)
    assert not admissible(constant_pair(geom, 1.0), constants, geom, 1.0)


def test_ratio_fallback_for_constant_function():
    geom = unit_slab(flat_torus([1.0, 1.0]))
    pair = constant_pair(geom, 1.0)
    status, ratio = admissible_ratio(pair, geom, 1.0)
    # (3/2) * 1 + b/a * 1 = 0
    assert status == "critical"
    assert ratio == pytest.approx(-1.5)
    assert not admissible(pair, None, geom, 1.0)


def test_zero_integral_mode_admissible_with_ratio_fallback():
    # f = cos(pi r) on [0, 1] integrates to 0 and f(1) = -1: admissible only when b = 0
    geom = unit_slab(flat_torus([1.0, 1.0]))
    grid = np.linspace(0, 1, 201)
    pair = Eigenpair(0, 2, 1.0, sampled(grid, np.cos(np.pi * grid), -np.pi * np.sin(np.pi * grid)))
    status, ratio = admissible_ratio(pair, geom, 1.0)
    assert status == "critical" and ratio == pytest.approx(0.0, abs=1e-12)
    assert admissible(pair, ConstraintConstants(1.0, 0.0, 0.0, 1.0, 1.0), geom, 1.0)
    assert not admissible(pair, ConstraintConstants(1.0, 0.1, 0.0, 1.0, 1.0), geom, 1.0)


def trapezoid_terms(solution, geom, gamma, refine=4):
    """Independent trapezoid evaluation on a grid refined from the solution's."""
    spline = solution.interpolant()
    base = np.unique(np.clip(solution.grid, geom.r1, gamma))
    fine = np.unique(np.concatenate([np.linspace(a, b, refine + 1)
                                     for a, b in zip(base, base[1:])]))
    f = spline(fine)
    w = np.asarray(geom.alpha.alpha(fine)) ** (geom.n - 1)
    interior = 0.5 * geom.n * np.trapezoid(w * f, fine)
    boundary = 0.5 * (geom.n - 1) * float(spline(gamma)) * float(geom.alpha.alpha(gamma)) ** 2
    return interior, boundary


def test_sign_changing_mode_matches_trapezoid_oracle():
    geom = ads_schwarzschild()
    gamma = float(areal_to_radial(geom, [6.0])[0])
    problem = MixedProblem(3, geom.r1, gamma, geom.alpha, 0.0, 0.0, 0.0, -0.2)
    pair = find_eigenvalues(problem, 3)[2]
    terms = admissibility_terms(pair.solution, geom, gamma)
    interior, boundary = trapezoid_terms(pair.solution, geom, gamma)
    scale = terms.interior_abs + abs(terms.boundary)
    assert abs(terms.interior - interior) < 1e-5 * scale
    assert terms.boundary == pytest.approx(boundary, rel=1e-12)
    constants = ConstraintConstants(0.3, 0.7, 0.0, 1.0, 1.0)
    oracle_value = 0.3 * interior + 0.7 * boundary
    if abs(oracle_value) > 1e-4 * scale:
        assert not admissible(pair, constants, geom, gamma)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0, 5), b=st.floats(-5, 5), c=st.floats(1e-3, 1e3))
def test_admissibility_homogeneous(a, b, c):
    geom = unit_slab()
    grid = np.linspace(0, 1, 101)
    pair = Eigenpair(0, 2, 1.0, sampled(grid, np.cos(3 * grid), -3 * np.sin(3 * grid)))
    base = ConstraintConstants(a, b, 0.0, 1.0, 1.0)
    scaled = ConstraintConstants(c * a, c * b, 0.0, 1.0, 1.0)
    assert admissible(pair, base, geom, 1.0) == admissible(pair, scaled, geom, 1.0)


def test_mark_admissible_fills_every_entry():
    geom = unit_slab()
    table = assemble(geom, 1.0, 0.0, 0.0, 0.0, 2, 2)
    mark_admissible(table, compute_ab(3, 2.0, 0.0, 4 * math.pi, 4 * math.pi), geom, 1.0)
    assert all(e.admissible is not None for e in table.entries)
    assert all(e.admissible for e in table.entries if e.fiber_index == 1)
    assert not table.entries[0].admissible
