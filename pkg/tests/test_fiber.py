import itertools
import math

import numpy as np
import pytest

from warped_rigidity.errors import FiberError
from warped_rigidity.fiber import eigenvalues, explicit, flat_torus, round_sphere


def test_unit_two_sphere():
    fiber = round_sphere(2)
    assert fiber.curvature == 1.0
    assert fiber.volume == pytest.approx(4 * math.pi)
    assert eigenvalues(fiber, 4) == [(0.0, 1), (2.0, 3), (6.0, 5), (12.0, 7)]


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_sphere_multiplicities_are_harmonic_dimensions(dim):
    # dimension of degree-l harmonic polynomials in dim+1 variables
    def harmonic(l):
        total = math.comb(l + dim, dim)
        return total - (math.comb(l - 2 + dim, dim) if l >= 2 else 0)

    vals = eigenvalues(round_sphere(dim), 6)
    for l, (value, mult) in enumerate(vals):
        assert value == l * (l + dim - 1)
        assert mult == harmonic(l)


def test_sphere_scaling():
    fiber = round_sphere(2, scale=4.0)
    assert fiber.curvature == pytest.approx(0.25)
    assert fiber.volume == pytest.approx(16 * math.pi)
    assert eigenvalues(fiber, 2)[1][0] == pytest.approx(0.5)


def brute_torus(lengths, count, box=8):
    vals = sorted(4 * math.pi**2 * sum((k / L) ** 2 for k, L in zip(ks, lengths))
                  for ks in itertools.product(range(-box, box + 1), repeat=len(lengths)))
    out = []
    for v in vals:
        if out and math.isclose(v, out[-1][0], rel_tol=1e-12, abs_tol=1e-12):
            out[-1][1] += 1
        else:
            out.append([v, 1])
    return [tuple(x) for x in out[:count]]


@pytest.mark.parametrize("lengths", [(1.0, 1.0), (1.0, 2.5), (0.7, 1.3, 2.0)])
def test_torus_matches_brute_force(lengths):
    got = eigenvalues(flat_torus(lengths), 8)
    want = brute_torus(lengths, 8)
    assert [m for _, m in got] == [m for _, m in want]
    np.testing.assert_allclose([v for v, _ in got], [v for v, _ in want], rtol=1e-12)


def test_torus_metadata():
    fiber = flat_torus([2.0, 3.0])
    assert fiber.curvature == 0.0
    assert fiber.volume == 6.0
    assert fiber.dim == 2


def test_explicit_passthrough_and_limits():
    fiber = explicit([(0, 1), (1.5, 2), (4, 1)], curvature=-1.0, volume=3.0)
    assert eigenvalues(fiber, 2) == [(0.0, 1), (1.5, 2)]
    with pytest.raises(FiberError):
        eigenvalues(fiber, 4)


@pytest.mark.parametrize("pairs", [
    [],
    [(1.0, 1)],
    [(0.0, 2)],
    [(0.0, 1), (2.0, 1), (1.0, 1)],
    [(0.0, 1), (1.0, 0)],
])
def test_explicit_validation(pairs):
    with pytest.raises(FiberError):
        explicit(pairs, 0.0, 1.0)


def test_invalid_specs():
    with pytest.raises(FiberError):
        round_sphere(2, scale=0.0)
    with pytest.raises(FiberError):
        flat_torus([1.0, -1.0])
    with pytest.raises(FiberError):
        eigenvalues(round_sphere(2), 0)
