"""Reference problems with closed-form spectra and seeded random problem batches."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.optimize import brentq

from .geometry import AdsSchwarzschildWarp, ConstantWarp, TabulatedWarp, WarpFunction
from .slp import MixedProblem, RadialSolution, sampled


def characteristic(mu, length: float, shift: float, J1: float, J2: float):
    """Boundary mismatch at the far end for -f'' + shift f = mu f, f(0) = 1, f'(0) = -(J1 + mu).

    Written in terms of cos(w L) and sin(w L)/w with w^2 = mu - shift, both
    entire in w^2, so the same expression covers mu below ``shift``.
    """
    mu = np.asarray(mu, dtype=float)
    w = np.sqrt((mu - shift).astype(complex))
    C = np.cos(w * length).real
    S = np.where(w == 0, length, np.sin(w * length) / np.where(w == 0, 1, w)).real
    w2 = mu - shift
    return -w2 * S - (J1 + mu) * C - (J2 + mu) * (C - (J1 + mu) * S)


def constant_coefficient_eigenvalues(count: int, length: float = 1.0, shift: float = 0.0,
                                     J1: float = 0.0, J2: float = 0.0,
                                     xtol: float = 1e-13) -> List[float]:
    """First ``count`` roots of ``characteristic`` by sign-change scan and Brent refinement."""
    # no eigenvalue lies below -(G+ + J+) with G = -shift
    lo = -(max(0.0, -shift) + max(0.0, J1, J2)) - 1.0
    roots: List[float] = []
    hi = max(shift, lo) + ((count + 2) * np.pi / length) ** 2 + 10.0
    while len(roots) < count:
        xs = np.linspace(lo, hi, 20001)
        ys = characteristic(xs, length, shift, J1, J2)
        roots = []
        for a, b, fa, fb in zip(xs, xs[1:], ys, ys[1:]):
            if fa == 0.0:
                roots.append(float(a))
            elif fa * fb < 0:
                roots.append(brentq(characteristic, a, b, args=(length, shift, J1, J2),
                                    xtol=xtol, rtol=4 * np.finfo(float).eps))
        hi = 2 * hi - lo
    return roots[:count]


def cosh_warp(length: float = 1.0, samples: int = 401) -> TabulatedWarp:
    """alpha = cosh r on [0, length] as tabulated samples."""
    r = np.linspace(0.0, length, samples)
    return TabulatedWarp(r, np.cosh(r), np.sinh(r), np.cosh(r))


@dataclass(frozen=True)
class RandomProblemSpec:
    warp_kind: str
    G_kind: str
    problem: MixedProblem


def random_problem(rng: np.random.Generator) -> RandomProblemSpec:
    """A mixed problem with a random preset warp, potential and Robin data in [-3, 3]."""
    kind = rng.choice(["constant", "cosh", "ads"])
    n = 3
    if kind == "constant":
        length = float(rng.uniform(0.5, 2.0))
        warp: WarpFunction = ConstantWarp(float(rng.uniform(0.5, 2.0)))
        r1, r2 = 0.0, length
    elif kind == "cosh":
        length = float(rng.uniform(0.5, 1.5))
        warp = cosh_warp(length)
        r1, r2 = 0.0, length
    else:
        warp = AdsSchwarzschildWarp(1.0, 1.0, float(rng.choice([0.0, 1.0])), 8.0)
        r1, r2 = 0.0, float(rng.uniform(0.3, 0.9)) * warp.r_max
    beta = float(rng.integers(0, 4))
    beta = beta * (beta + 1)
    if rng.random() < 0.5:
        G_kind = "constant"
        G = float(rng.uniform(-3, 3))
    else:
        G_kind = "sinusoidal"
        g0, g1, k = rng.uniform(-2, 2), rng.uniform(0, 1.5), rng.uniform(0.5, 6)
        def G(r, g0=float(g0), g1=float(g1), k=float(k)):
            return g0 + g1 * np.sin(k * np.asarray(r))
    J1, J2 = (float(x) for x in rng.uniform(-3, 3, size=2))
    return RandomProblemSpec(str(kind), G_kind, MixedProblem(n, r1, r2, warp, beta, G, J1, J2))


def random_trial(problem: MixedProblem, rng: np.random.Generator, degree: int = 6,
                 samples: int = 129) -> RadialSolution:
    """Random Legendre series on [r1, r2], sampled with exact derivatives."""
    coef = rng.normal(size=degree + 1) / (1.0 + np.arange(degree + 1))
    series = np.polynomial.Legendre(coef, domain=[problem.r1, problem.r2])
    grid = np.linspace(problem.r1, problem.r2, samples)
    return sampled(grid, series(grid), series.deriv()(grid))
