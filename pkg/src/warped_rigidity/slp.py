"""Radial Sturm-Liouville problems whose eigenvalue also enters the Robin data.

For a fiber eigenvalue ``beta`` the radial factor solves

    -(alpha^(n-1) f')' / alpha^(n-1) + beta/alpha^2 f = (G + mu) f   on (r1, r2)
    -f'(r1) = (J1 + mu) f(r1),        f'(r2) = (J2 + mu) f(r2).

Everything is integrated as the first-order system in (f, p f') with
p = alpha^(n-1).  Writing f = rho sin(theta), p f' = rho cos(theta), the
starting angle at r1 increases with mu while the target angle at r2
decreases, so there is exactly one eigenvalue with k interior zeros for
every k >= 0.  The number of eigenvalues below a trial value is therefore

    N(mu) = Z(mu) + [D(mu) f(r2) < 0],

where Z counts interior sign changes of the shot solution and D is the
boundary mismatch at r2.  The eigenvalue search brackets with N and
refines by multisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import ode
from .errors import IncompleteSpectrumError, SolverError
from .geometry import WarpFunction
from .quadrature import gauss_legendre_panels

Potential = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class SolverTolerances:
    ode_rel: float = 1e-10
    ode_abs: float = 1e-12
    root_tol: float = 1e-10
    ceiling: float = 1e8
    floor_margin: float = 1.0
    # steps never exceed this fraction of the interval
    max_step_fraction: float = 1.0 / 32
    sup_samples: int = 2049

    def __post_init__(self):
        for name in ("ode_rel", "ode_abs", "root_tol", "ceiling", "floor_margin",
                     "max_step_fraction"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


DEFAULT_TOLERANCES = SolverTolerances()


@dataclass(frozen=True)
class MixedProblem:
    n: int
    r1: float
    r2: float
    alpha: WarpFunction
    beta: float
    G: Potential = 0.0
    J1: float = 0.0
    J2: float = 0.0

    def __post_init__(self):
        if not self.r1 < self.r2:
            raise ValueError(f"need r1 < r2, got ({self.r1}, {self.r2})")
        if self.beta < 0:
            raise ValueError("fiber eigenvalue beta must be non-negative")
        if not np.all(np.asarray(self.alpha.alpha(np.linspace(self.r1, self.r2, 65))) > 0):
            raise ValueError("alpha must be positive on [r1, r2]")

    @property
    def length(self) -> float:
        return self.r2 - self.r1

    def potential(self, r):
        if callable(self.G):
            return self.G(r)
        return self.G if np.ndim(r) == 0 else np.full(np.shape(r), float(self.G))

    def coefficients(self, r):
        """(p, c) with p = alpha^(n-1) and c = p (beta/alpha^2 - G)."""
        a = self.alpha.alpha(r)
        p = a ** (self.n - 1)
        return p, p * (self.beta / (a * a) - self.potential(r))

    def sup_potential(self, samples: int = 2049) -> float:
        if not callable(self.G):
            return float(self.G)
        return float(np.max(self.G(np.linspace(self.r1, self.r2, samples))))

    def with_beta(self, beta: float) -> "MixedProblem":
        return replace(self, beta=beta)


@dataclass
class RadialSolution:
    grid: np.ndarray
    values: np.ndarray
    derivative_values: np.ndarray
    node_count: int = field(init=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.derivative_values = np.asarray(self.derivative_values, dtype=float)
        if not (self.grid.shape == self.values.shape == self.derivative_values.shape):
            raise ValueError("grid, values and derivative_values must share a shape")
        self.node_count = count_sign_changes(self.values)

    def interpolant(self) -> CubicHermiteSpline:
        if self.grid[0] > self.grid[-1]:
            return CubicHermiteSpline(self.grid[::-1], self.values[::-1],
                                      self.derivative_values[::-1])
        return CubicHermiteSpline(self.grid, self.values, self.derivative_values)


@dataclass
class Eigenpair:
    fiber_index: int
    radial_index: int
    value: float
    solution: RadialSolution
    fiber_eigenvalue: float = 0.0
    multiplicity: int = 1
    admissible: Optional[bool] = None

    @property
    def node_count(self) -> int:
        return self.solution.node_count


def count_sign_changes(values) -> int:
    v = np.asarray(values)
    s = np.sign(v[v != 0])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def lower_bound(problem: MixedProblem, samples: int = 2049) -> float:
    """-(G+ + J+): no eigenvalue lies below this value."""
    g_plus = max(0.0, problem.sup_potential(samples))
    j_plus = max(0.0, problem.J1, problem.J2)
    return -(g_plus + j_plus)


# --- shooting -------------------------------------------------------------

@dataclass
class _Shot:
    trials: np.ndarray
    traj: ode.Trajectory
    p_end: float

    @property
    def y_end(self):
        return self.traj.final[0]

    @property
    def u_end(self):
        return self.traj.final[1]

    def zeros(self) -> np.ndarray:
        y = self.traj.states[:, 0, :]
        s = np.sign(y)
        changes = (s[1:] * s[:-1]) < 0
        return changes.sum(axis=0)


def _rhs_factory(problem: MixedProblem, trials: np.ndarray):
    warp, n, beta = problem.alpha, problem.n - 1, problem.beta
    if callable(problem.G):
        def coeffs(t):
            a, jac = warp.param_alpha(t)
            p = a ** n
            return p, p * (beta / (a * a) - float(problem.G(warp.radius(t)))), jac
    else:
        G = float(problem.G)

        def coeffs(t):
            a, jac = warp.param_alpha(t)
            p = a ** n
            return p, p * (beta / (a * a) - G), jac

    def rhs(t, Y):
        p, c, jac = coeffs(t)
        out = np.empty_like(Y)
        np.multiply(Y[1], jac / p, out=out[0])
        np.multiply((c - trials * p) * jac, Y[0], out=out[1])
        return out

    top = float(np.max(trials))
    inv_length = 1.0 / problem.length

    def rate(t):
        p, c, jac = coeffs(t)
        return (math.sqrt(max(top - c / p, 0.0)) + inv_length) * jac

    return rhs, rate


def _shoot_batch(problem: MixedProblem, trials, tol: SolverTolerances,
                 step_scale: float = 1.0) -> _Shot:
    """Shoot every trial value from r1 in one batched integration."""
    trials = np.atleast_1d(np.asarray(trials, dtype=float))
    warp = problem.alpha
    t1, t2 = float(warp.param(problem.r1)), float(warp.param(problem.r2))
    p1, _ = problem.coefficients(problem.r1)
    y0 = np.vstack([np.ones_like(trials), -p1 * (problem.J1 + trials)])
    rhs, rate = _rhs_factory(problem, trials)
    traj = ode.integrate(rhs, t1, t2, y0, rtol=tol.ode_rel, atol=tol.ode_abs,
                         max_step=abs(t2 - t1) * tol.max_step_fraction * step_scale,
                         rate=rate)
    r = np.asarray(warp.radius(traj.t), dtype=float)
    r[0], r[-1] = problem.r1, problem.r2
    traj.t = r
    p2, _ = problem.coefficients(problem.r2)
    return _Shot(trials, traj, float(p2))


def _mismatch_scaled(problem: MixedProblem, shot: _Shot) -> np.ndarray:
    """D in the per-column scale of the final step (sign is exact)."""
    return shot.u_end / shot.p_end - (problem.J2 + shot.trials) * shot.y_end


def _count_below(problem: MixedProblem, shot: _Shot) -> np.ndarray:
    D = _mismatch_scaled(problem, shot)
    return shot.zeros() + (D * shot.y_end < 0).astype(int)


def _solution_from(problem: MixedProblem, shot: _Shot, column: int) -> RadialSolution:
    r = shot.traj.t
    p, _ = problem.coefficients(r)
    y = shot.traj.states[:, 0, column]
    u = shot.traj.states[:, 1, column]
    return RadialSolution(r, y, u / p)


def shoot(problem: MixedProblem, trial: float,
          tol: SolverTolerances = DEFAULT_TOLERANCES) -> RadialSolution:
    """Integrate from r1 with f(r1) = 1, f'(r1) = -(J1 + trial)."""
    shot = _shoot_batch(problem, [trial], tol)
    return _solution_from(problem, shot, 0)


def _shoot_back_batch(problem: MixedProblem, trials, tol: SolverTolerances,
                     step_scale: float = 1.0) -> ode.Trajectory:
    """Integrate every trial from r2 down to r1 with f(r2) = 1, f'(r2) = J2 + trial."""
    trials = np.atleast_1d(np.asarray(trials, dtype=float))
    warp = problem.alpha
    t1, t2 = float(warp.param(problem.r1)), float(warp.param(problem.r2))
    p2, _ = problem.coefficients(problem.r2)
    y0 = np.vstack([np.ones_like(trials), p2 * (problem.J2 + trials)])
    rhs, rate = _rhs_factory(problem, trials)
    traj = ode.integrate(rhs, t2, t1, y0, rtol=tol.ode_rel, atol=tol.ode_abs,
                         max_step=abs(t2 - t1) * tol.max_step_fraction * step_scale,
                         rate=rate)
    r = np.asarray(warp.radius(traj.t), dtype=float)
    r[0], r[-1] = problem.r2, problem.r1
    traj.t = r
    return traj


def _unscaled(problem: MixedProblem, traj: ode.Trajectory, column: int) -> RadialSolution:
    states = np.ldexp(traj.states[:, :, column], traj.log2_scale[column])
    p, _ = problem.coefficients(traj.t)
    return RadialSolution(traj.t, states[:, 0], states[:, 1] / p)


def shoot_backward(problem: MixedProblem, trial: float,
                   tol: SolverTolerances = DEFAULT_TOLERANCES) -> RadialSolution:
    """Integrate from r2 down to r1 with f(r2) = 1, f'(r2) = J2 + trial.

    The returned grid runs from r2 to r1.  Values are in true scale, so very
    fast growth can overflow to inf.
    """
    return _unscaled(problem, _shoot_back_batch(problem, [trial], tol), 0)


def _decay_score(values) -> np.ndarray:
    """|f| relative to its running maximum in the direction of integration."""
    a = np.abs(values)
    with np.errstate(invalid="ignore", divide="ignore"):
        score = a / np.maximum.accumulate(a)
    return np.nan_to_num(score, nan=0.0)


def _two_sided(forward: RadialSolution, backward: RadialSolution) -> RadialSolution:
    """Join a forward and a backward shot into one eigenfunction, f(r1) = 1.

    Rounding excites the solution that grows in the direction of integration,
    so each shot is reliable only where it has not decayed from its running
    maximum.  The join point maximizes the smaller of the two scores.
    """
    rf, yf, df = forward.grid, forward.values, forward.derivative_values
    rb, yb, db = backward.grid[::-1], backward.values[::-1], backward.derivative_values[::-1]
    score_f = _decay_score(yf)
    score_b = _decay_score(backward.values)[::-1]
    score = np.minimum(score_f, np.interp(rf, rb, score_b))
    k = int(np.argmax(score))
    rm = rf[k]
    yb_m = float(CubicHermiteSpline(rb, yb, db)(rm)) if rm < rb[-1] else yb[-1]
    keep = rb > rm
    grid = np.concatenate([rf[:k + 1], rb[keep]])
    values = np.concatenate([yf[:k + 1] / yf[k], yb[keep] / yb_m])
    derivs = np.concatenate([df[:k + 1] / yf[k], db[keep] / yb_m])
    return RadialSolution(grid, values / values[0], derivs / values[0])


def mismatch(problem: MixedProblem, trial, tol: SolverTolerances = DEFAULT_TOLERANCES):
    """D(trial) = f'(r2) - (J2 + trial) f(r2); zero exactly at eigenvalues.

    Accepts a scalar or an array of trials.
    """
    shot = _shoot_batch(problem, trial, tol)
    D = np.ldexp(_mismatch_scaled(problem, shot), shot.traj.log2_scale)
    return float(D[0]) if np.ndim(trial) == 0 else D


def count_below(problem: MixedProblem, trial, tol: SolverTolerances = DEFAULT_TOLERANCES):
    """Number of eigenvalues strictly below ``trial``."""
    shot = _shoot_batch(problem, trial, tol)
    N = _count_below(problem, shot)
    return int(N[0]) if np.ndim(trial) == 0 else N


# --- eigenvalue search ----------------------------------------------------

_SECTIONS = 32


def _isolate(problem, lo, hi, n_lo, n_hi, targets, tol, step_scale):
    """Sorted sample points such that each target index sits in a one-jump bracket."""
    pts = {lo: n_lo, hi: n_hi}
    for _ in range(200):
        xs = sorted(pts)
        ns = [pts[x] for x in xs]
        bad = []
        for a, b, na, nb in zip(xs, xs[1:], ns, ns[1:]):
            if nb - na > 1 and any(na <= k < nb for k in targets):
                if b - a <= tol.root_tol:
                    raise IncompleteSpectrumError(
                        f"{nb - na} eigenvalues in [{a:.17g}, {b:.17g}] cannot be separated")
                bad.append((a, b))
        if not bad:
            return xs, ns
        new = np.concatenate([np.linspace(a, b, _SECTIONS + 1)[1:-1] for a, b in bad])
        counts = _count_below(problem, _shoot_batch(problem, new, tol, step_scale))
        pts.update(zip(new.tolist(), counts.tolist()))
        # N must be nondecreasing; a violation means the sampling missed zeros
        xs = sorted(pts)
        if any(pts[b] < pts[a] for a, b in zip(xs, xs[1:])):
            raise IncompleteSpectrumError("eigenvalue counting function is not monotone")
    raise IncompleteSpectrumError("could not isolate eigenvalues")


def _refine(problem, brackets, targets, tol, step_scale):
    lo = np.array([b[0] for b in brackets])
    hi = np.array([b[1] for b in brackets])
    k = np.array(targets)
    for _ in range(200):
        width = hi - lo
        if np.all(width <= tol.root_tol):
            break
        frac = np.arange(1, _SECTIONS) / _SECTIONS
        pts = lo[:, None] + width[:, None] * frac[None, :]
        counts = _count_below(problem, _shoot_batch(problem, pts.ravel(), tol, step_scale))
        counts = counts.reshape(pts.shape)
        below = counts <= k[:, None]
        # last point still below the eigenvalue / first point above it
        n_below = below.sum(axis=1)
        if np.any(np.diff(below.astype(int), axis=1) > 0):
            raise IncompleteSpectrumError("eigenvalue counting function is not monotone")
        edges = np.concatenate([lo[:, None], pts, hi[:, None]], axis=1)
        idx = np.arange(len(lo))
        lo, hi = edges[idx, n_below], edges[idx, n_below + 1]
    return lo, hi


def _polish(problem, lo, hi, tol, step_scale):
    """One Newton step with a central-difference derivative, kept inside the bracket."""
    mid = 0.5 * (lo + hi)
    h = np.maximum(1e-6 * (1.0 + np.abs(mid)), 1e3 * tol.root_tol)
    trials = np.concatenate([mid, mid - h, mid + h])
    shot = _shoot_batch(problem, trials, tol, step_scale)
    D = np.ldexp(_mismatch_scaled(problem, shot), shot.traj.log2_scale)
    m = len(mid)
    d0, dm, dp = D[:m], D[m:2 * m], D[2 * m:]
    slope = (dp - dm) / (2 * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        new = mid - d0 / slope
    ok = np.isfinite(new) & (new >= lo) & (new <= hi)
    return np.where(ok, new, mid)


def find_eigenvalues(problem: MixedProblem, count: int,
                     window: Optional[Tuple[float, float]] = None,
                     tol: SolverTolerances = DEFAULT_TOLERANCES,
                     fiber_index: int = 0) -> List[Eigenpair]:
    """The ``count`` smallest eigenvalues (inside ``window`` when given), ascending.

    Raises ``IncompleteSpectrumError`` when the eigenvalues cannot be
    separated or the eigenfunction node counts do not form the sequence
    0, 1, 2, ... (after one re-run with halved maximum step).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    floor = lower_bound(problem, tol.sup_samples) - tol.floor_margin
    last_error = None
    for step_scale in (1.0, 0.5, 0.25):
        try:
            return _find(problem, count, window, tol, fiber_index, floor, step_scale)
        except IncompleteSpectrumError as exc:
            last_error = exc
    raise last_error


def _find(problem, count, window, tol, fiber_index, floor, step_scale):
    def N(x):
        return int(_count_below(problem, _shoot_batch(problem, [x], tol, step_scale))[0])

    if window is None:
        lo = floor
        n_lo = N(lo)
        if n_lo != 0:
            raise SolverError(f"{n_lo} eigenvalues found below the lower bound {floor:.17g}")
        span = ((count + 1) * math.pi / problem.length) ** 2 + 1.0
        while True:
            ladder = lo + span * np.array([1.0, 2.0, 4.0])
            counts = _count_below(problem, _shoot_batch(problem, ladder, tol, step_scale))
            hit = np.nonzero(counts >= count)[0]
            if hit.size:
                hi, n_hi = float(ladder[hit[0]]), int(counts[hit[0]])
                empty = np.nonzero(counts[:hit[0]] == 0)[0]
                if empty.size:
                    lo = float(ladder[empty[-1]])
                break
            if ladder[-1] > tol.ceiling:
                raise IncompleteSpectrumError(
                    f"only {counts[-1]} eigenvalues below the ceiling {tol.ceiling:g}")
            span *= 8.0
        targets = list(range(count))
    else:
        lo, hi = map(float, window)
        if not lo < hi:
            raise ValueError("window must satisfy lo < hi")
        lo = max(lo, floor)
        n_lo, n_hi = N(lo), N(hi)
        targets = list(range(n_lo, min(n_hi, n_lo + count)))
        if not targets:
            return []

    xs, ns = _isolate(problem, lo, hi, n_lo, n_hi, targets, tol, step_scale)
    brackets = []
    for k in targets:
        for a, b, na, nb in zip(xs, xs[1:], ns, ns[1:]):
            if na <= k < nb:
                brackets.append((a, b))
                break
    blo, bhi = _refine(problem, brackets, targets, tol, step_scale)
    values = _polish(problem, blo, bhi, tol, step_scale)

    shot = _shoot_batch(problem, values, tol, step_scale)
    back = _shoot_back_batch(problem, values, tol, step_scale)
    pairs = []
    for col, (k, mu) in enumerate(zip(targets, values)):
        sol = _two_sided(_unscaled(problem, shot.traj, col), _unscaled(problem, back, col))
        if sol.node_count != k:
            raise IncompleteSpectrumError(
                f"eigenfunction {k + 1} has {sol.node_count} interior zeros, expected {k}")
        pairs.append(Eigenpair(fiber_index, k + 1, float(mu), sol, fiber_eigenvalue=problem.beta))
    return pairs


# --- Rayleigh quotient -----------------------------------------------------

def _panel_nodes(grid):
    grid = np.asarray(grid, dtype=float)
    edges = grid if grid[0] < grid[-1] else grid[::-1]
    return gauss_legendre_panels(edges)


def energy_terms(problem: MixedProblem, trial) -> Tuple[float, float]:
    """(numerator, denominator) of the Rayleigh quotient for a sampled trial function."""
    grid = np.asarray(trial.grid, dtype=float)
    lo, hi = min(grid[0], grid[-1]), max(grid[0], grid[-1])
    slack = 1e-9 * max(1.0, problem.length)
    if abs(lo - problem.r1) > slack or abs(hi - problem.r2) > slack:
        raise ValueError("trial function must be sampled on a grid covering [r1, r2]")
    spline = trial.interpolant()
    x, w = _panel_nodes(grid)
    f = spline(x)
    df = spline.derivative()(x)
    a = np.asarray(problem.alpha.alpha(x))
    p = a ** (problem.n - 1)
    G = problem.potential(x)
    f1, f2 = spline(problem.r1), spline(problem.r2)
    p1, _ = problem.coefficients(problem.r1)
    p2, _ = problem.coefficients(problem.r2)
    num = (np.dot(w, p * (df**2 + (problem.beta / a**2 - G) * f**2))
           - problem.J1 * p1 * f1**2 - problem.J2 * p2 * f2**2)
    den = np.dot(w, p * f**2) + p1 * f1**2 + p2 * f2**2
    return float(num), float(den)


def rayleigh_quotient(problem: MixedProblem, trial) -> float:
    """Quotient of the energy form by the interior-plus-boundary L2 form.

    ``trial`` is anything with ``grid``, ``values`` and ``derivative_values``
    (e.g. a ``RadialSolution``); it is interpolated by cubic Hermite splines
    and integrated with 16-point Gauss-Legendre on each grid panel.
    """
    num, den = energy_terms(problem, trial)
    if den == 0.0:
        raise ZeroDivisionError("trial function is identically zero")
    return num / den


def sampled(grid: Sequence[float], values: Sequence[float],
            derivative_values: Sequence[float]) -> RadialSolution:
    return RadialSolution(np.asarray(grid), np.asarray(values), np.asarray(derivative_values))
