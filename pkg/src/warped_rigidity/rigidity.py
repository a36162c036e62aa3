"""Jacobi problems on slabs, zero-eigenvalue detection along a family of slabs.

The slab [r1, gamma] x P carries the mixed problem

    Delta f = (G + mu) f inside,   -d_n f = (J + mu) f on the boundary,

with G = R/(n-1), J = 0 on the minimal inner slice and J = H(gamma)/(n-1)
on the outer one.  A slab is degenerate when mu = 0 is an admissible
eigenvalue.  Only fiber modes up to the positivity cutoff can contribute,
and for each of them the zero test is a single backward integration.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConstraintError, GeometryError
from .fiber import eigenvalues as fiber_eigenvalues
from .geometry import WarpedGeometry, bisect_root, mean_curvature, verify_constant_scalar
from .quadrature import gauss_legendre_panels
from .slp import (DEFAULT_TOLERANCES, Eigenpair, MixedProblem, RadialSolution,
                  SolverTolerances, count_below, find_eigenvalues, shoot_backward)
from .spectrum import (DEFAULT_ADMISSIBILITY_TOL, ConstraintConstants, SpectrumTable,
                       admissible, assemble, mark_admissible,
                       slab_constants, slab_cutoff, worker_count)

DEFAULT_DETECTOR_TOL = 1e-6
# |R|, |H| at or below this count as zero for the sign hypotheses
SIGN_ZERO_TOL = 1e-8


class Convention(str, enum.Enum):
    """Placement of the 1/(n-1) factors on R and H in the Jacobi problem."""

    PER_BIFVARIATION = "PerBifvariation"
    PER_SECTION52 = "PerSection52"


class Classification(str, enum.Enum):
    RIGID_BY_THEOREM = "RigidByTheorem"
    RIGID_NUMERICALLY = "RigidNumerically"
    DEGENERACY_CANDIDATE = "DegeneracyCandidate"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class JacobiProblem:
    problem: MixedProblem  # beta = 0; use for_mode for other fiber modes
    gamma: float
    geometry: WarpedGeometry
    R: float
    H: float
    convention: Convention

    def for_mode(self, beta: float) -> MixedProblem:
        return self.problem.with_beta(beta)


def constant_scalar(geom: WarpedGeometry, tol: float = 1e-6) -> float:
    check = verify_constant_scalar(geom, tol)
    if not check.constant:
        raise GeometryError(
            f"scalar curvature is not constant (max deviation {check.max_deviation:.3g})")
    return check.value


def jacobi_problem(geom: WarpedGeometry, gamma: float,
                   convention: Convention = Convention.PER_BIFVARIATION,
                   R: Optional[float] = None) -> JacobiProblem:
    """The Jacobi mixed problem on [r1, gamma].

    ``R`` may be passed to skip the constant-curvature check when the caller
    has already run it.
    """
    convention = Convention(convention)
    if R is None:
        R = constant_scalar(geom)
    if not geom.is_inner_minimal():
        raise GeometryError("inner slice is not minimal: alpha'(r1) != 0")
    H = mean_curvature(geom, gamma)
    factor = geom.n - 1 if convention is Convention.PER_BIFVARIATION else 1
    problem = MixedProblem(geom.n, geom.r1, gamma, geom.alpha, 0.0, R / factor, 0.0, H / factor)
    return JacobiProblem(problem, float(gamma), geom, float(R), float(H), convention)


# --- detector ---------------------------------------------------------------

class DetectorResult(NamedTuple):
    value: float
    scale: float  # 1 + max |f'| along the backward solution
    solution: RadialSolution

    def is_zero(self, tol: float = DEFAULT_DETECTOR_TOL) -> bool:
        return abs(self.value) <= tol * self.scale


def detector_solution(problem: MixedProblem,
                      tol: SolverTolerances = DEFAULT_TOLERANCES) -> DetectorResult:
    sol = shoot_backward(problem, 0.0, tol)
    value = float(sol.derivative_values[-1] + problem.J1 * sol.values[-1])
    if not math.isfinite(value):
        raise GeometryError("detector integration overflowed")
    scale = 1.0 + float(np.max(np.abs(sol.derivative_values)))
    return DetectorResult(value, scale, sol)


def detector(geom: WarpedGeometry, gamma: float, fiber_eigenvalue: float,
             convention: Convention = Convention.PER_BIFVARIATION,
             tol: SolverTolerances = DEFAULT_TOLERANCES, R: Optional[float] = None) -> float:
    """f'(r1) for the mu = 0 solution with f(gamma) = 1, f'(gamma) = J2.

    Zero exactly when mu = 0 is an eigenvalue of the given fiber mode.
    """
    jp = jacobi_problem(geom, gamma, convention, R)
    return detector_solution(jp.for_mode(fiber_eigenvalue), tol).value


# --- quadratic form -----------------------------------------------------------

class QuadraticFormValue(NamedTuple):
    Q: float
    E: float
    residual: float


def quadratic_form(geom: WarpedGeometry, gamma: float, pair: Eigenpair,
                   R: Optional[float] = None, order: int = 24) -> QuadraticFormValue:
    """Second variation Q(f) and the L2 form E(f) for a separated eigenfunction.

    The fiber factor is normalized to unit mean square, so only the radial
    integrals remain.  ``residual`` is Q - c * mu * E with c = (n-2)(n-1)/2,
    which vanishes for eigenpairs of the Jacobi problem in its default form.
    """
    if R is None:
        R = constant_scalar(geom)
    n = geom.n
    H = mean_curvature(geom, gamma)
    c = 0.5 * (n - 2) * (n - 1)
    sol = pair.solution
    spline = sol.interpolant()
    dspline = spline.derivative()
    edges = np.unique(np.clip(sol.grid, geom.r1, gamma))
    x, w = gauss_legendre_panels(edges, order)
    a = np.asarray(geom.alpha.alpha(x))
    p = a ** (n - 1)
    f, df = spline(x), dspline(x)
    p1 = float(geom.alpha.alpha(geom.r1)) ** (n - 1)
    p2 = float(geom.alpha.alpha(gamma)) ** (n - 1)
    f1, f2 = float(spline(geom.r1)), float(spline(gamma))
    beta = pair.fiber_eigenvalue
    Q = c * (float(np.dot(w, p * (df**2 + (beta / a**2 - R / (n - 1)) * f**2)))
             - H / (n - 1) * p2 * f2**2)
    E = float(np.dot(w, p * f**2)) + p1 * f1**2 + p2 * f2**2
    return QuadraticFormValue(Q, E, Q - c * pair.value * E)


# --- scan -------------------------------------------------------------------

@dataclass
class GammaRecord:
    gamma: float
    H: float
    constants: Optional[ConstraintConstants]
    cutoff_i0: int
    detectors: List[Tuple[int, float]]
    detector_scales: List[float]
    min_admissible_eigenvalue: float
    negative_admissible_count: int
    classification: Classification
    offending_modes: List[int] = field(default_factory=list)
    note: str = ""

    @property
    def min_detector_abs(self) -> float:
        return min(abs(d) for _, d in self.detectors)


class Crossing(NamedTuple):
    """A zero of the detector of one fiber mode between two grid points."""

    fiber_index: int
    gamma: float
    admissible: bool


@dataclass
class RigidityReport:
    gamma_grid: List[float]
    records: List[GammaRecord]
    crossings: List[Crossing]
    R: float
    convention: Convention

    @property
    def classifications(self) -> List[Classification]:
        return [r.classification for r in self.records]


@dataclass(frozen=True)
class ScanSettings:
    fiber_count: int = 3
    radial_count: int = 3
    convention: Convention = Convention.PER_BIFVARIATION
    full_solve: bool = False
    detector_tol: float = DEFAULT_DETECTOR_TOL
    admissibility_tol: float = DEFAULT_ADMISSIBILITY_TOL
    solver: SolverTolerances = DEFAULT_TOLERANCES


def theorem_applies(R: float, H: float, zero_tol: float = SIGN_ZERO_TOL) -> bool:
    """R <= 0 and H <= 0 with at least one of them strictly negative."""
    return R <= zero_tol and H <= zero_tol and (R < -zero_tol or H < -zero_tol)


def _snap(x: float) -> float:
    return 0.0 if abs(x) <= SIGN_ZERO_TOL else x


def constraint_constants(geom, gamma, R, H):
    try:
        return slab_constants(geom, gamma, _snap(R), _snap(H)), ""
    except ConstraintError as exc:
        return None, str(exc)


def _zero_mode_admissible(sol, constants, geom, gamma, tol, degenerate) -> bool:
    """Admissibility of a mu = 0 eigenfunction of the constant fiber mode.

    When no valid (a, b) exists the mode is conservatively treated as
    admissible unless R = H = 0, where it must be admissible for every ratio.
    """
    pair = Eigenpair(0, 0, 0.0, sol)
    if constants is not None:
        return admissible(pair, constants, geom, gamma, tol)
    if degenerate:
        return admissible(pair, None, geom, gamma, tol)
    return True


def _negative_counts(jp: JacobiProblem, fvals, i0, settings, constants, degenerate):
    """Count negative admissible eigenvalues without computing the full spectrum.

    Nonconstant fiber modes are always admissible, so counting eigenvalues
    below zero suffices; the constant mode's negative eigenvalues are solved
    and tested individually.
    """
    total, lowest = 0, math.inf
    geom, gamma = jp.geometry, jp.gamma
    for i in range(i0 + 1):
        beta, _ = fvals[i]
        prob = jp.for_mode(beta)
        k = count_below(prob, 0.0, settings.solver)
        if k == 0:
            continue
        pairs = find_eigenvalues(prob, k, tol=settings.solver, fiber_index=i)
        for p in pairs:
            if i >= 1 or _zero_mode_admissible(p.solution, constants, geom, gamma,
                                               settings.admissibility_tol, degenerate):
                total += 1
                lowest = min(lowest, p.value)
    return total, lowest


def _full_spectrum(jp: JacobiProblem, i0, settings, constants, degenerate) -> SpectrumTable:
    geom, gamma = jp.geometry, jp.gamma
    table = assemble(geom, gamma, jp.problem.G, jp.problem.J1, jp.problem.J2,
                     max(settings.fiber_count, i0 + 1), settings.radial_count,
                     tol=settings.solver, workers=1)
    if constants is not None or degenerate:
        mark_admissible(table, constants, geom, gamma, settings.admissibility_tol)
    else:
        for e in table.entries:
            e.admissible = True
    return table


def _scan_point(geom, gamma, R, settings: ScanSettings) -> GammaRecord:
    jp = jacobi_problem(geom, gamma, settings.convention, R)
    H = jp.H
    constants, note = constraint_constants(geom, gamma, R, H)
    degenerate = abs(R) <= SIGN_ZERO_TOL and abs(H) <= SIGN_ZERO_TOL
    i0, fvals = slab_cutoff(geom, gamma, jp.problem.sup_potential(),
                            samples=settings.solver.sup_samples)
    detectors, scales, offending = [], [], []
    for i in range(i0 + 1):
        res = detector_solution(jp.for_mode(fvals[i][0]), settings.solver)
        detectors.append((i, res.value))
        scales.append(res.scale)
        if res.is_zero(settings.detector_tol):
            if i >= 1 or _zero_mode_admissible(res.solution, constants, geom, gamma,
                                               settings.admissibility_tol, degenerate):
                offending.append(i)

    if settings.full_solve:
        table = _full_spectrum(jp, i0, settings, constants, degenerate)
        adm = [e.value for e in table.entries if e.admissible]
        lowest = min(adm) if adm else math.inf
        negatives = sum(1 for v in adm if v < 0)
    else:
        negatives, lowest = _negative_counts(jp, fvals, i0, settings, constants, degenerate)
        if negatives == 0:
            lowest = math.nan

    if offending:
        cls = Classification.DEGENERACY_CANDIDATE
    elif theorem_applies(R, H):
        cls = Classification.RIGID_BY_THEOREM
    elif negatives == 0 and (not settings.full_solve or lowest > 0):
        cls = Classification.RIGID_NUMERICALLY
    else:
        cls = Classification.INCONCLUSIVE
    return GammaRecord(float(gamma), H, constants, i0, detectors, scales, float(lowest),
                       negatives, cls, offending, note)


def _detector_of(geom, R, convention, solver, beta):
    def D(gamma):
        jp = jacobi_problem(geom, gamma, convention, R)
        return detector_solution(jp.for_mode(beta), solver)
    return D


def locate_crossing(geom: WarpedGeometry, lo: float, hi: float, beta: float, R: float,
                    convention: Convention = Convention.PER_BIFVARIATION,
                    solver: SolverTolerances = DEFAULT_TOLERANCES, xtol: float = 1e-12) -> float:
    """Zero of gamma -> D(gamma) in [lo, hi] by bisection (a sign change is required)."""
    D = _detector_of(geom, R, convention, solver, beta)
    return bisect_root(lambda g: D(g).value, lo, hi, xtol=xtol * max(1.0, abs(hi)))


def _refine_near_zero(geom, lo, hi, beta, R, settings):
    """Golden-section search for the smallest |D| on [lo, hi]."""
    D = _detector_of(geom, R, settings.convention, settings.solver, beta)
    res = minimize_scalar(lambda g: abs(D(g).value), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10 * max(1.0, abs(hi))})
    return float(res.x)


def _crossings(geom, records: List[GammaRecord], R, settings) -> List[Crossing]:
    """Sign changes of each tracked detector between neighbouring grid points."""
    found = []
    for left, right in zip(records, records[1:]):
        dl, dr = dict(left.detectors), dict(right.detectors)
        for i in sorted(set(dl) & set(dr)):
            if dl[i] == 0.0 or dr[i] == 0.0 or (dl[i] > 0) == (dr[i] > 0):
                continue
            beta = _fiber_value(geom, i)
            g_star = locate_crossing(geom, left.gamma, right.gamma, beta, R,
                                     settings.convention, settings.solver)
            ok = True
            if i == 0:
                jp = jacobi_problem(geom, g_star, settings.convention, R)
                constants, _ = constraint_constants(geom, g_star, R, jp.H)
                degenerate = abs(R) <= SIGN_ZERO_TOL and abs(jp.H) <= SIGN_ZERO_TOL
                sol = detector_solution(jp.problem, settings.solver).solution
                ok = _zero_mode_admissible(sol, constants, geom, g_star,
                                           settings.admissibility_tol, degenerate)
            found.append(Crossing(i, g_star, ok))
    return found


def _fiber_value(geom, i):
    return fiber_eigenvalues(geom.fiber, i + 1)[i][0]


def _near_zero(geom, grid, records, crossings, R, settings) -> List[Crossing]:
    """Refine gamma for detectors that are small at a grid point without a sign change."""
    found = []
    for k, rec in enumerate(records):
        for i in rec.offending_modes:
            lo = grid[max(k - 1, 0)]
            hi = grid[min(k + 1, len(grid) - 1)]
            if any(c.fiber_index == i and lo <= c.gamma <= hi for c in crossings):
                continue
            if lo == hi:
                found.append(Crossing(i, rec.gamma, True))
                continue
            found.append(Crossing(i, _refine_near_zero(geom, lo, hi, _fiber_value(geom, i),
                                                       R, settings), True))
    return found


def scan(geom: WarpedGeometry, gamma_grid: Sequence[float], fiber_count: int = 3,
         convention: Convention = Convention.PER_BIFVARIATION, full_solve: bool = False,
         radial_count: int = 3, detector_tol: float = DEFAULT_DETECTOR_TOL,
         admissibility_tol: float = DEFAULT_ADMISSIBILITY_TOL,
         tol: SolverTolerances = DEFAULT_TOLERANCES,
         workers: Optional[int] = None) -> RigidityReport:
    """Classify every slab [r1, gamma] of the grid.

    Each point gets its own detector values and negative-eigenvalue count.
    Detector sign changes between neighbouring points are then located by
    bisection in gamma; an admissible crossing marks the nearer grid point
    as a degeneracy candidate.
    """
    grid = [float(g) for g in gamma_grid]
    if not grid:
        raise ValueError("gamma grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("gamma grid must be strictly increasing")
    geom.check_radius(grid, lo_open=True)
    if grid[-1] >= geom.r2:
        raise GeometryError(f"gamma={grid[-1]:.17g} must lie below r2={geom.r2:.17g}")
    settings = ScanSettings(fiber_count, radial_count, Convention(convention), full_solve,
                            detector_tol, admissibility_tol, tol)
    R = constant_scalar(geom)
    if not geom.is_inner_minimal():
        raise GeometryError("inner slice is not minimal: alpha'(r1) != 0")

    n_workers = min(worker_count(workers), len(grid))
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            records = list(pool.map(lambda g: _scan_point(geom, g, R, settings), grid))
    else:
        records = [_scan_point(geom, g, R, settings) for g in grid]

    crossings = _crossings(geom, records, R, settings)
    crossings += _near_zero(geom, grid, records, crossings, R, settings)
    crossings.sort(key=lambda c: (c.gamma, c.fiber_index))
    for c in crossings:
        if not c.admissible:
            continue
        nearest = min(records, key=lambda rec: abs(rec.gamma - c.gamma))
        if c.fiber_index not in nearest.offending_modes:
            nearest.offending_modes.append(c.fiber_index)
            nearest.offending_modes.sort()
        nearest.classification = Classification.DEGENERACY_CANDIDATE
    return RigidityReport(grid, records, crossings, R, settings.convention)
