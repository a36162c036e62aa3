"""Assembly of the separated spectrum over fiber modes, constraint constants, admissibility."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConstraintError, FiberError
from .fiber import Explicit, FiberSpec, eigenvalues as fiber_eigenvalues
from .geometry import WarpedGeometry, weighted_volume
from .quadrature import gauss_legendre_panels
from .slp import (DEFAULT_TOLERANCES, Eigenpair, MixedProblem, Potential, SolverTolerances,
                  find_eigenvalues, lower_bound)

DEFAULT_ADMISSIBILITY_TOL = 1e-7


@dataclass(frozen=True)
class ConstraintConstants:
    """Coefficients of a*Vol + b*Area = 1 and the multiplier lambda."""

    a: float
    b: float
    lam: float
    volume: float
    area: float


def compute_ab(n: int, R: float, H: float, V: float, A: float) -> ConstraintConstants:
    """Solve a V + b A = 1 together with (n-1) b R = 2 n a H.

    Raises ``ConstraintError`` when R = H = 0 (only the ratio a:b matters
    then) or when every solution has a < 0.
    """
    if not (V > 0 and A > 0):
        raise ValueError("volume and area must be positive")
    if R == 0.0 and H == 0.0:
        raise ConstraintError("R = H = 0: a and b are not determined")
    if H == 0.0:
        a, b = 1.0 / V, 0.0
        lam = V * R * (n - 2) / n
    elif R == 0.0:
        a, b = 0.0, 1.0 / A
        lam = A * H * 2.0 * (n - 2) / (n - 1)
    else:
        ratio = (n - 1) * R / (2.0 * n * H)  # a = ratio * b
        denom = ratio * V + A
        if denom == 0.0:
            raise ConstraintError("constraint is degenerate: ratio * V + A = 0")
        b = 1.0 / denom
        a = ratio * b
        if a < 0:
            raise ConstraintError(f"signs of R={R} and H={H} force a < 0")
        lam = R * (n - 2) / (n * a)
    return ConstraintConstants(float(a), float(b), float(lam), float(V), float(A))


def slab_constants(geom: WarpedGeometry, gamma: float, R: float, H: float) -> ConstraintConstants:
    V = geom.fiber.volume * weighted_volume(geom, gamma)
    A = geom.fiber.volume * float(geom.alpha.alpha(gamma)) ** (geom.n - 1)
    return compute_ab(geom.n, R, H, V, A)


# --- admissibility ---------------------------------------------------------

class AdmissibilityTerms(NamedTuple):
    """The zero-mode constraint reads a * interior + b * boundary = 0."""

    interior: float
    boundary: float
    interior_abs: float


def admissibility_terms(solution, geom: WarpedGeometry, gamma: float) -> AdmissibilityTerms:
    n = geom.n
    spline = solution.interpolant()
    grid = np.asarray(solution.grid)
    edges = np.sort(grid)
    edges = edges[(edges >= geom.r1) & (edges <= gamma)]
    edges = np.unique(np.concatenate([[geom.r1], edges, [gamma]]))
    x, w = gauss_legendre_panels(edges)
    weight = np.asarray(geom.alpha.alpha(x)) ** (n - 1)
    f = spline(x)
    interior = 0.5 * n * float(np.dot(w, weight * f))
    interior_abs = 0.5 * n * float(np.dot(w, weight * np.abs(f)))
    boundary = 0.5 * (n - 1) * float(spline(gamma)) * float(geom.alpha.alpha(gamma)) ** (n - 1)
    return AdmissibilityTerms(interior, boundary, interior_abs)


class RatioAdmissibility(NamedTuple):
    status: str  # "all" | "critical"
    ratio: Optional[float]  # b/a making the mode admissible (inf: a = 0)


def admissible_ratio(pair: Eigenpair, geom: WarpedGeometry, gamma: float,
                     tol: float = DEFAULT_ADMISSIBILITY_TOL) -> RatioAdmissibility:
    """Ratio analysis for the doubly degenerate case R = H = 0."""
    if pair.fiber_index >= 1:
        return RatioAdmissibility("all", None)
    T = admissibility_terms(pair.solution, geom, gamma)
    scale = T.interior_abs + abs(T.boundary)
    if abs(T.interior) <= tol * scale and abs(T.boundary) <= tol * scale:
        return RatioAdmissibility("all", None)
    if T.boundary == 0.0:
        return RatioAdmissibility("critical", math.inf)
    return RatioAdmissibility("critical", -T.interior / T.boundary)


def admissible(pair: Eigenpair, constants: Optional[ConstraintConstants], geom: WarpedGeometry,
               gamma: float, tol: float = DEFAULT_ADMISSIBILITY_TOL) -> bool:
    """Whether the eigenfunction lies in the constraint's tangent space.

    Nonconstant fiber modes always integrate to zero over the fiber.  For the
    constant fiber mode the radial factor must satisfy
    (n a/2) int alpha^(n-1) f + ((n-1) b/2) f(gamma) alpha(gamma)^(n-1) = 0
    to relative tolerance ``tol``.  With ``constants=None`` (R = H = 0) the
    mode counts as admissible only if it is admissible for every ratio a:b.
    """
    if pair.fiber_index >= 1:
        return True
    if constants is None:
        return admissible_ratio(pair, geom, gamma, tol).status == "all"
    T = admissibility_terms(pair.solution, geom, gamma)
    value = constants.a * T.interior + constants.b * T.boundary
    scale = abs(constants.a) * T.interior_abs + abs(constants.b * T.boundary)
    return abs(value) <= tol * scale


# --- assembly --------------------------------------------------------------

@dataclass
class SpectrumTable:
    entries: List[Eigenpair]
    cutoff_i0: int
    floor: float
    fiber_values: List[float] = field(default_factory=list)
    skipped_modes: List[int] = field(default_factory=list)

    def first_eigenvalues(self) -> dict:
        out = {}
        for e in self.entries:
            if e.radial_index == 1:
                out[e.fiber_index] = e.value
        return dict(sorted(out.items()))


def cutoff_index(fiber_values: Sequence[float], alpha_max: float, sup_G: float) -> int:
    """Largest index i0 >= 0 with beta_i / alpha_max^2 <= sup G.

    Every mode above i0 satisfies beta_i / alpha^2 > G on the slab and so,
    with non-positive boundary data, has only positive eigenvalues.  Mode 0
    is always kept.  ``fiber_values`` must extend past the cutoff.
    """
    if fiber_values[-1] / alpha_max**2 <= sup_G:
        raise FiberError("fiber eigenvalue list does not reach the positivity cutoff")
    i0 = 0
    for i, beta in enumerate(fiber_values):
        if beta / alpha_max**2 <= sup_G:
            i0 = i
    return i0


def fiber_values_past_cutoff(fiber: FiberSpec, alpha_max: float, sup_G: float,
                             minimum: int) -> List[Tuple[float, int]]:
    """At least ``minimum`` fiber eigenvalues, extended until one exceeds the cutoff."""
    limit = len(fiber.spectrum.pairs) if isinstance(fiber.spectrum, Explicit) else None
    count = max(minimum, 2)
    while True:
        if limit is not None:
            count = min(count, limit)
        vals = fiber_eigenvalues(fiber, count)
        if vals[-1][0] / alpha_max**2 > sup_G or count == limit:
            return vals
        count *= 2


def slab_cutoff(geom: WarpedGeometry, gamma: float, sup_G: float, minimum: int = 2,
                samples: int = 2049):
    """(i0, fiber values) for the slab [r1, gamma]."""
    alpha_max = float(np.max(geom.alpha.alpha(np.linspace(geom.r1, gamma, samples))))
    fvals = fiber_values_past_cutoff(geom.fiber, alpha_max, sup_G, minimum)
    return cutoff_index([v for v, _ in fvals], alpha_max, sup_G), fvals


def worker_count(workers: Optional[int] = None) -> int:
    if workers is None:
        workers = int(os.environ.get("WARPED_RIGIDITY_THREADS", "0") or 0)
    return workers if workers > 0 else min(8, os.cpu_count() or 1)


def assemble(geom: WarpedGeometry, gamma: float, G: Potential, J1: float, J2: float,
             fiber_count: int, radial_count: int, fast: bool = False,
             tol: SolverTolerances = DEFAULT_TOLERANCES,
             workers: Optional[int] = None) -> SpectrumTable:
    """Eigenpairs of the first ``fiber_count`` fiber modes on the slab [r1, gamma].

    In ``fast`` mode, modes above the positivity cutoff are not solved and
    are listed in ``skipped_modes`` instead.
    """
    geom.check_radius(gamma, lo_open=True)
    if fiber_count < 1 or radial_count < 1:
        raise ValueError("counts must be >= 1")
    base = MixedProblem(geom.n, geom.r1, gamma, geom.alpha, 0.0, G, J1, J2)
    i0, fvals = slab_cutoff(geom, gamma, base.sup_potential(tol.sup_samples), fiber_count,
                            tol.sup_samples)
    if len(fvals) < fiber_count:
        raise FiberError(f"fiber provides only {len(fvals)} eigenvalues")
    modes = list(range(fiber_count))
    skipped = [i for i in modes if fast and i > i0]
    solved = [i for i in modes if i not in skipped]

    def solve(i):
        beta, mult = fvals[i]
        pairs = find_eigenvalues(base.with_beta(beta), radial_count, tol=tol, fiber_index=i)
        for p in pairs:
            p.multiplicity = mult
        return pairs

    n_workers = min(worker_count(workers), len(solved)) or 1
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(solve, solved))
    else:
        results = [solve(i) for i in solved]
    entries = sorted((p for pairs in results for p in pairs),
                     key=lambda p: (p.value, p.fiber_index, p.radial_index))
    return SpectrumTable(entries, i0, lower_bound(base, tol.sup_samples),
                         [v for v, _ in fvals[:fiber_count]], skipped)


def mark_admissible(table: SpectrumTable, constants: Optional[ConstraintConstants],
                    geom: WarpedGeometry, gamma: float,
                    tol: float = DEFAULT_ADMISSIBILITY_TOL) -> SpectrumTable:
    for e in table.entries:
        e.admissible = admissible(e, constants, geom, gamma, tol)
    return table
