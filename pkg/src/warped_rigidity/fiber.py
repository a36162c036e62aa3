"""Closed fibers (P, g_P): curvature constant, volume and Laplacian spectrum."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from .errors import FiberError


@dataclass(frozen=True)
class RoundSphere:
    scale: float = 1.0


@dataclass(frozen=True)
class FlatTorus:
    lengths: Tuple[float, ...]


@dataclass(frozen=True)
class Explicit:
    pairs: Tuple[Tuple[float, int], ...]


Spectrum = Union[RoundSphere, FlatTorus, Explicit]


@dataclass(frozen=True)
class FiberSpec:
    """Fiber metadata.

    ``curvature`` uses the normalization of the warped scalar-curvature
    formula, in which the unit round sphere S^d has curvature d - 1 (the
    unit 2-sphere has curvature 1).  For a metric scaled g -> c g both the
    curvature and the Laplacian eigenvalues are divided by c.
    """

    dim: int
    curvature: float
    volume: float
    spectrum: Spectrum

    def __post_init__(self):
        if self.dim < 2:
            raise FiberError("fiber dimension must be >= 2")
        if not self.volume > 0:
            raise FiberError("fiber volume must be positive")
        if isinstance(self.spectrum, RoundSphere) and not self.spectrum.scale > 0:
            raise FiberError("sphere scale must be positive")
        if isinstance(self.spectrum, FlatTorus):
            if len(self.spectrum.lengths) != self.dim or min(self.spectrum.lengths) <= 0:
                raise FiberError("torus needs dim positive lattice lengths")
        if isinstance(self.spectrum, Explicit):
            _validate_pairs(self.spectrum.pairs)


def _validate_pairs(pairs):
    if not pairs:
        raise FiberError("explicit spectrum is empty")
    values = [v for v, _ in pairs]
    if values[0] != 0 or pairs[0][1] != 1:
        raise FiberError("explicit spectrum must start with (0, 1) for a connected fiber")
    if any(v < 0 for v in values):
        raise FiberError("fiber eigenvalues must be non-negative")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise FiberError("explicit eigenvalues must be strictly increasing")
    if any(int(m) != m or m < 1 for _, m in pairs):
        raise FiberError("multiplicities must be positive integers")


def round_sphere(dim: int = 2, scale: float = 1.0) -> FiberSpec:
    """S^dim with metric scale * g_unit."""
    if not scale > 0:
        raise FiberError(f"sphere scale must be positive, got {scale}")
    unit_volume = 2.0 * math.pi ** ((dim + 1) / 2) / math.gamma((dim + 1) / 2)
    return FiberSpec(dim, (dim - 1) / scale, unit_volume * scale ** (dim / 2), RoundSphere(scale))


def flat_torus(lengths: Sequence[float]) -> FiberSpec:
    lengths = tuple(float(x) for x in lengths)
    return FiberSpec(len(lengths), 0.0, float(np.prod(lengths)), FlatTorus(lengths))


def explicit(pairs: Sequence[Tuple[float, int]], curvature: float, volume: float,
             dim: int = 2) -> FiberSpec:
    pairs = tuple((float(v), int(m)) for v, m in pairs)
    return FiberSpec(dim, float(curvature), float(volume), Explicit(pairs))


def _sphere_multiplicity(l: int, d: int) -> int:
    if l == 0:
        return 1
    return math.comb(l + d - 1, d - 1) * (2 * l + d - 1) // (l + d - 1)


def _torus_eigenvalues(lengths, count):
    inv = 1.0 / np.asarray(lengths)
    box = 1
    while True:
        rng = range(-box, box + 1)
        vals = np.array([4 * math.pi**2 * float(np.sum((np.array(k) * inv) ** 2))
                         for k in itertools.product(rng, repeat=len(lengths))])
        # every lattice vector outside the box has value >= this bound
        bound = 4 * math.pi**2 * ((box + 1) * float(np.min(inv))) ** 2
        vals = np.sort(vals[vals < bound * (1 - 1e-12)])
        out: List[Tuple[float, int]] = []
        for v in vals:
            if out and abs(v - out[-1][0]) <= 1e-12 * max(1.0, v):
                out[-1] = (out[-1][0], out[-1][1] + 1)
            else:
                out.append((float(v), 1))
        if len(out) >= count:
            return out[:count]
        box += 1


def eigenvalues(fiber: FiberSpec, count: int) -> List[Tuple[float, int]]:
    """First ``count`` distinct eigenvalues of the fiber Laplacian with multiplicities."""
    if count < 1:
        raise FiberError("count must be >= 1")
    spec = fiber.spectrum
    if isinstance(spec, RoundSphere):
        d = fiber.dim
        return [(l * (l + d - 1) / spec.scale, _sphere_multiplicity(l, d)) for l in range(count)]
    if isinstance(spec, FlatTorus):
        return _torus_eigenvalues(spec.lengths, count)
    if count > len(spec.pairs):
        raise FiberError(f"requested {count} eigenvalues but only {len(spec.pairs)} were given")
    return list(spec.pairs[:count])
