"""Warped product geometries dr^2 + alpha(r)^2 g_P and their curvatures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.interpolate import CubicSpline

from .errors import GeometryError
from .fiber import FiberSpec, round_sphere
from .quadrature import gauss_legendre_panels

DEFAULT_MINIMALITY_TOL = 1e-8


class WarpValues(NamedTuple):
    alpha: np.ndarray
    alpha_dot: np.ndarray
    alpha_ddot: Optional[np.ndarray]


class WarpFunction:
    """A positive warping function with its first two derivatives."""

    kind: str

    def evaluate(self, r) -> WarpValues:
        raise NotImplementedError

    def alpha(self, r):
        return self.evaluate(r).alpha

    # Radial ODEs are integrated in a parameter t with r = radius(t).  The
    # default parameter is r itself.
    def param(self, r):
        return r

    def radius(self, t):
        return t

    def param_alpha(self, t: float):
        """(alpha, dr/dt) at parameter value ``t``; scalar fast path."""
        return self.alpha(t), 1.0


@dataclass(frozen=True)
class ConstantWarp(WarpFunction):
    c: float
    kind: str = field(default="constant", init=False)

    def __post_init__(self):
        if not self.c > 0:
            raise GeometryError(f"constant warp must be positive, got {self.c}")

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        zero = np.zeros_like(r)
        return WarpValues(zero + self.c, zero, zero)

    def alpha(self, r):
        if np.ndim(r) == 0:
            return self.c
        return np.full(np.shape(r), self.c)


class TabulatedWarp(WarpFunction):
    """Warp function given by samples (r, alpha, alpha_dot[, alpha_ddot]).

    The three columns are interpolated by independent cubic splines; the
    derivatives are never obtained by differentiating the alpha spline.
    """

    kind = "tabulated"

    def __init__(self, r, alpha, alpha_dot, alpha_ddot=None):
        r = np.asarray(r, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        alpha_dot = np.asarray(alpha_dot, dtype=float)
        if r.ndim != 1 or r.size < 4:
            raise GeometryError("tabulated warp needs at least 4 samples")
        if not np.all(np.diff(r) > 0):
            raise GeometryError("tabulated samples must be strictly increasing in r")
        if alpha.shape != r.shape or alpha_dot.shape != r.shape:
            raise GeometryError("tabulated columns must have equal length")
        if not np.all(alpha > 0):
            raise GeometryError("tabulated alpha must be positive")
        self.r = r
        self.samples_alpha = alpha
        self.samples_alpha_dot = alpha_dot
        self._a = CubicSpline(r, alpha)
        self._da = CubicSpline(r, alpha_dot)
        if alpha_ddot is None:
            self.samples_alpha_ddot = None
            self._dda = None
        else:
            alpha_ddot = np.asarray(alpha_ddot, dtype=float)
            if alpha_ddot.shape != r.shape:
                raise GeometryError("tabulated columns must have equal length")
            self.samples_alpha_ddot = alpha_ddot
            self._dda = CubicSpline(r, alpha_ddot)

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        dda = None if self._dda is None else self._dda(r)
        return WarpValues(self._a(r), self._da(r), dda)

    def alpha(self, r):
        return self._a(r) if np.ndim(r) else float(self._a(r))


class AdsSchwarzschildWarp(WarpFunction):
    """alpha = s(r) for the slice ds^2/F(s) + s^2 g_P, F(s) = kP - 2K/s + E s^2.

    The radial coordinate is arc length measured from the horizon s_hat.  With
    s = s_hat + u^2 the relation between r and u is smooth:

        dr/du = 2 / sqrt(q(u)),   q(u) = F(s)/u^2 = 2K/(s_hat s) + E (s + s_hat),

    where the closed form of q uses F(s_hat) = 0 and has no cancellation.
    u(r) is stored as a Chebyshev series on [0, r_max].
    """

    kind = "ads_schwarzschild"

    def __init__(self, kP: float, K: float, E: float, s_max: float):
        self.kP, self.K, self.E = float(kP), float(K), float(E)
        self.s_hat = horizon_radius(kP, K, E)
        if not s_max > self.s_hat:
            raise GeometryError(
                f"s_max={s_max} must exceed the horizon radius {self.s_hat:.17g}")
        self.s_max = float(s_max)
        self.u_max = math.sqrt(self.s_max - self.s_hat)
        self._r_of_u = _chebyshev_fit(self._r_of_u_quad, 0.0, self.u_max)
        self.r_max = float(self._r_of_u(self.u_max))
        self._u_of_r = _chebyshev_fit(self._invert, 0.0, self.r_max)

    def _q(self, s):
        return 2.0 * self.K / (self.s_hat * s) + self.E * (s + self.s_hat)

    def _drdu(self, u):
        return 2.0 / np.sqrt(self._q(self.s_hat + u * u))

    def _r_of_u_quad(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.empty_like(u)
        order = np.argsort(u)
        edges = np.concatenate([[0.0], u[order]])
        # cumulative composite Gauss-Legendre over consecutive nodes
        acc = 0.0
        for k in range(1, edges.size):
            x, w = gauss_legendre_panels(np.linspace(edges[k - 1], edges[k], 5))
            acc += float(np.dot(w, self._drdu(x)))
            out[order[k - 1]] = acc
        return out

    def _invert(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        # Newton on r(u) = r starting from a monotone interpolation guess
        grid = np.linspace(0.0, self.u_max, 257)
        u = np.interp(r, self._r_of_u(grid), grid)
        for _ in range(50):
            step = (self._r_of_u(u) - r) / self._drdu(u)
            u = np.clip(u - step, 0.0, self.u_max)
            if np.max(np.abs(step)) < 1e-15 * (1.0 + self.u_max):
                break
        return u

    def param(self, r):
        return np.maximum(self._u_of_r(r), 0.0)

    def radius(self, t):
        return self._r_of_u(t)

    def param_alpha(self, t):
        s = self.s_hat + t * t
        q = 2.0 * self.K / (self.s_hat * s) + self.E * (s + self.s_hat)
        return s, 2.0 / math.sqrt(q)

    def evaluate(self, r):
        u = self._u_of_r(np.asarray(r, dtype=float))
        s = self.s_hat + u * u
        return WarpValues(s, np.abs(u) * np.sqrt(self._q(s)), self.K / s**2 + self.E * s)

    def alpha(self, r):
        u = self._u_of_r(r)
        return self.s_hat + u * u

    def radicand(self, s):
        s = np.asarray(s, dtype=float)
        return self.kP - 2.0 * self.K / s + self.E * s * s

    def r_of_s(self, s):
        """Radial coordinate of the slice with areal radius ``s``."""
        s = np.asarray(s, dtype=float)
        if np.any(s < self.s_hat) or np.any(s > self.s_max * (1 + 1e-14)):
            raise GeometryError(f"areal radius outside [{self.s_hat}, {self.s_max}]")
        return self._r_of_u(np.sqrt(np.maximum(s - self.s_hat, 0.0)))


def _chebyshev_fit(func, lo, hi, tol=1e-14, max_deg=1024):
    deg = 32
    while True:
        series = cheb.Chebyshev.interpolate(func, deg, domain=[lo, hi])
        tail = np.max(np.abs(series.coef[-4:]))
        if tail <= tol * max(1.0, np.max(np.abs(series.coef))) or deg >= max_deg:
            return series
        deg *= 2


def bisect_root(func, lo: float, hi: float, xtol: float = 0.0, max_iter: int = 200) -> float:
    """Bisection on a sign-change bracket; stops at floating-point resolution."""
    flo, fhi = func(lo), func(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise GeometryError(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= xtol:
            break
        fmid = func(mid)
        if fmid == 0.0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def horizon_radius(kP: float, K: float, E: float) -> float:
    """Largest positive zero of kP - 2K/s + E s^2, i.e. of E s^3 + kP s - 2K."""
    if not K > 0:
        raise GeometryError("mass K must be positive")
    if E < 0:
        raise GeometryError("cosmological constant E must be non-negative")
    cubic = lambda s: (E * s * s + kP) * s - 2.0 * K
    # E s^3 + kP s - 2K is negative at 0 and has exactly one positive zero
    # whenever it has any; grow an upper bracket by doubling.
    hi = 1.0
    for _ in range(2000):
        if cubic(hi) > 0:
            break
        hi *= 2.0
        if E == 0.0 and kP <= 0:
            raise GeometryError("no positive horizon: kP <= 0 with E = 0")
    else:
        raise GeometryError("no positive horizon radius found")
    s_hat = bisect_root(cubic, 0.0, hi)
    slope = 2.0 * K / s_hat**2 + 2.0 * E * s_hat
    if not slope > 0:
        raise GeometryError("horizon is not a simple root")
    return s_hat


@dataclass(frozen=True)
class WarpedGeometry:
    n: int
    r1: float
    r2: float
    alpha: WarpFunction
    fiber: FiberSpec
    minimality_tol: float = DEFAULT_MINIMALITY_TOL

    def __post_init__(self):
        if self.n < 3:
            raise GeometryError(f"dimension n must be >= 3, got {self.n}")
        if not (math.isfinite(self.r1) and math.isfinite(self.r2) and self.r1 < self.r2):
            raise GeometryError(f"need finite r1 < r2, got ({self.r1}, {self.r2})")
        if self.fiber.dim != self.n - 1:
            raise GeometryError(f"fiber dimension {self.fiber.dim} != n - 1 = {self.n - 1}")
        samples = np.asarray(self.alpha.alpha(np.linspace(self.r1, self.r2, 513)))
        if not np.all(samples > 0):
            raise GeometryError("warping function must be positive on [r1, r2]")

    def check_radius(self, r, lo_open=False):
        r_arr = np.asarray(r, dtype=float)
        slack = 1e-12 * max(1.0, abs(self.r1), abs(self.r2))
        low_bad = r_arr <= self.r1 if lo_open else r_arr < self.r1 - slack
        if np.any(low_bad) or np.any(r_arr > self.r2 + slack):
            interval = "(" if lo_open else "["
            raise GeometryError(
                f"r={r} outside {interval}{self.r1:.17g}, {self.r2:.17g}]")

    def is_inner_minimal(self) -> bool:
        return abs(float(self.alpha.evaluate(self.r1).alpha_dot)) <= self.minimality_tol

    def with_r2(self, r2: float) -> "WarpedGeometry":
        return WarpedGeometry(self.n, self.r1, r2, self.alpha, self.fiber, self.minimality_tol)


def scalar_curvature(geom: WarpedGeometry, r):
    """R(g) = (n-1)/alpha^2 * (R_P - ((n-2) alpha'^2 + 2 alpha'' alpha)).

    ``R_P`` is the fiber's curvature constant in the normalization where the
    unit round 2-sphere has ``R_P = 1``.
    """
    geom.check_radius(r)
    a, da, dda = geom.alpha.evaluate(r)
    if dda is None:
        raise GeometryError("tabulated warp lacks second-derivative samples")
    n = geom.n
    R = (n - 1) / a**2 * (geom.fiber.curvature - ((n - 2) * da**2 + 2.0 * dda * a))
    return float(R) if np.ndim(R) == 0 else R


def mean_curvature(geom: WarpedGeometry, gamma):
    """Mean curvature H(gamma) = -(n-1) alpha'(gamma)/alpha(gamma) of the slice at gamma."""
    geom.check_radius(gamma, lo_open=True)
    a, da, _ = geom.alpha.evaluate(gamma)
    H = -(geom.n - 1) * da / a
    return float(H) if np.ndim(H) == 0 else H


def ads_schwarzschild(kP: float = 1.0, K: float = 1.0, E: float = 0.0,
                      s_max: float = 10.0, fiber: Optional[FiberSpec] = None,
                      minimality_tol: float = DEFAULT_MINIMALITY_TOL) -> WarpedGeometry:
    """Spatial slice of the AdS-Schwarzschild family, n = 3, radial arc-length coordinate.

    With ``fiber=None`` the fiber is the round 2-sphere of curvature constant
    ``kP`` (so ``kP = 1`` is the unit sphere).  Non-positive ``kP`` needs an
    explicit fiber.
    """
    warp = AdsSchwarzschildWarp(kP, K, E, s_max)
    if fiber is None:
        if not kP > 0:
            raise GeometryError("kP <= 0 is not a round sphere; pass an explicit fiber")
        fiber = round_sphere(2, scale=1.0 / kP)
    if not math.isclose(fiber.curvature, kP, rel_tol=1e-12, abs_tol=1e-14):
        raise GeometryError(f"fiber curvature {fiber.curvature} != kP = {kP}")
    return WarpedGeometry(3, 0.0, warp.r_max, warp, fiber, minimality_tol)


class ConstantScalarCheck(NamedTuple):
    constant: bool
    value: float
    max_deviation: float


def verify_constant_scalar(geom: WarpedGeometry, tol: float = 1e-6,
                           samples: int = 401) -> ConstantScalarCheck:
    if not tol > 0:
        raise ValueError("tol must be positive")
    r = np.linspace(geom.r1, geom.r2, samples)
    R = scalar_curvature(geom, r)
    value = float(np.mean(R))
    dev = float(np.max(np.abs(R - value)))
    return ConstantScalarCheck(dev <= tol, value, dev)


def slab_grid(geom: WarpedGeometry, gamma: float, panels: int = 64):
    """Gauss-Legendre nodes and weights on [r1, gamma]."""
    return gauss_legendre_panels(np.linspace(geom.r1, gamma, panels + 1))


def weighted_volume(geom: WarpedGeometry, gamma: float) -> float:
    """integral of alpha^(n-1) over [r1, gamma]."""
    x, w = slab_grid(geom, gamma)
    return float(np.dot(w, np.asarray(geom.alpha.alpha(x)) ** (geom.n - 1)))


def areal_to_radial(geom: WarpedGeometry, values: Sequence[float]) -> np.ndarray:
    """Convert areal radii alpha = s to radial coordinates (AdS family only)."""
    if not isinstance(geom.alpha, AdsSchwarzschildWarp):
        raise GeometryError("areal coordinates are only defined for the AdS-Schwarzschild family")
    return np.asarray(geom.alpha.r_of_s(np.asarray(values, dtype=float)), dtype=float)
