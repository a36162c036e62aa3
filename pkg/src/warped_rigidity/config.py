"""Strict run configuration for the command line tool."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import (BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError,
                      field_validator, model_validator)

from .errors import ConfigError
from .fiber import FiberSpec, explicit, flat_torus, round_sphere
from .geometry import (ConstantWarp, TabulatedWarp, WarpedGeometry, ads_schwarzschild,
                       areal_to_radial)
from .rigidity import Convention
from .slp import SolverTolerances


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AdsGeometry(_Strict):
    kind: Literal["ads_schwarzschild"]
    kP: PositiveFloat = 1.0
    K: PositiveFloat = 1.0
    E: float = Field(0.0, ge=0.0)
    s_max: PositiveFloat = 10.0


class ConstantGeometry(_Strict):
    kind: Literal["constant"]
    n: int = Field(3, ge=3)
    c: PositiveFloat = 1.0
    r1: float = 0.0
    r2: float = 1.0


class TabulatedGeometry(_Strict):
    """CSV with header ``r,alpha,alpha_dot[,alpha_ddot]``; relative paths resolve against the config."""

    kind: Literal["tabulated"]
    path: str
    n: int = Field(3, ge=3)


class SphereFiber(_Strict):
    kind: Literal["round_sphere"]
    scale: PositiveFloat = 1.0


class TorusFiber(_Strict):
    kind: Literal["flat_torus"]
    lengths: List[PositiveFloat]


class ExplicitFiber(_Strict):
    kind: Literal["explicit"]
    pairs: List[Tuple[float, PositiveInt]]
    curvature: float
    volume: PositiveFloat


Geometry = Union[AdsGeometry, ConstantGeometry, TabulatedGeometry]
Fiber = Union[SphereFiber, TorusFiber, ExplicitFiber]


class Tolerances(_Strict):
    ode_rel: PositiveFloat = 1e-10
    ode_abs: PositiveFloat = 1e-12
    root_tol: PositiveFloat = 1e-10
    detector_tol: PositiveFloat = 1e-6
    admissibility_tol: PositiveFloat = 1e-7

    def solver(self) -> SolverTolerances:
        return SolverTolerances(ode_rel=self.ode_rel, ode_abs=self.ode_abs,
                                root_tol=self.root_tol)


class GridRange(_Strict):
    start: float
    stop: float
    count: int = Field(ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.count > 1 and not self.start < self.stop:
            raise ValueError("grid needs start < stop")
        return self


Coordinate = Literal["r", "areal"]


class ProblemOverride(_Strict):
    """Replaces the Jacobi potential and Robin data by constants."""

    G: float = 0.0
    J1: float = 0.0
    J2: float = 0.0


class ConstraintOverride(_Strict):
    a: float = Field(ge=0.0)
    b: float


class SpectrumSection(_Strict):
    gamma: float
    coordinate: Coordinate = "r"
    fiber_count: PositiveInt = 3
    radial_count: PositiveInt = 3
    convention: Convention = Convention.PER_BIFVARIATION
    fast: bool = False
    problem: Optional[ProblemOverride] = None
    constraint: Optional[ConstraintOverride] = None


class ScanSection(_Strict):
    gamma: Union[GridRange, List[float]]
    coordinate: Coordinate = "r"
    fiber_count: PositiveInt = 3
    radial_count: PositiveInt = 3
    convention: Convention = Convention.PER_BIFVARIATION
    full_solve: bool = False

    @field_validator("gamma")
    @classmethod
    def _nonempty(cls, v):
        if isinstance(v, list) and not v:
            raise ValueError("gamma list is empty")
        return v

    def values(self) -> List[float]:
        if isinstance(self.gamma, GridRange):
            g = self.gamma
            return np.linspace(g.start, g.stop, g.count).tolist()
        return list(self.gamma)


CHECK_NAMES = ("lower_bound", "nodal", "monotonicity", "rayleigh", "quadratic_form", "oracle")


class VerifySection(_Strict):
    checks: List[Literal[CHECK_NAMES]] = list(CHECK_NAMES)
    gamma: Optional[float] = None
    coordinate: Coordinate = "r"
    fiber_count: PositiveInt = 4
    radial_count: PositiveInt = 4
    random_problems: int = Field(5, ge=0)
    rayleigh_trials: int = Field(100, ge=0)
    seed: int = 0


class RunConfig(_Strict):
    geometry: Geometry = Field(discriminator="kind")
    fiber: Optional[Fiber] = Field(None, discriminator="kind")
    tolerances: Tolerances = Tolerances()
    spectrum: Optional[SpectrumSection] = None
    scan: Optional[ScanSection] = None
    verify: Optional[VerifySection] = None


def _error_text(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def load_config(path: Union[str, Path]) -> Tuple[RunConfig, Path]:
    """Parse a JSON config; every problem is reported as ``ConfigError``."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    try:
        return RunConfig.model_validate(raw), path.parent
    except ValidationError as exc:
        raise ConfigError(_error_text(exc)) from exc


def build_fiber(cfg: Optional[Fiber], dim: int) -> Optional[FiberSpec]:
    if cfg is None:
        return None
    if isinstance(cfg, SphereFiber):
        return round_sphere(dim, cfg.scale)
    if isinstance(cfg, TorusFiber):
        return flat_torus(cfg.lengths)
    return explicit(cfg.pairs, cfg.curvature, cfg.volume, dim)


def _read_table(path: Path) -> TabulatedWarp:
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise ConfigError(f"cannot read tabulated warp {path}: {exc}") from exc
    names = data.dtype.names or ()
    missing = {"r", "alpha", "alpha_dot"} - set(names)
    if missing:
        raise ConfigError(f"tabulated warp {path} lacks columns {sorted(missing)}")
    ddot = data["alpha_ddot"] if "alpha_ddot" in names else None
    return TabulatedWarp(data["r"], data["alpha"], data["alpha_dot"], ddot)


def build_geometry(cfg: RunConfig, base_dir: Path = Path(".")) -> WarpedGeometry:
    g = cfg.geometry
    if isinstance(g, AdsGeometry):
        return ads_schwarzschild(g.kP, g.K, g.E, g.s_max, build_fiber(cfg.fiber, 2))
    fiber = build_fiber(cfg.fiber, g.n - 1)
    if isinstance(g, ConstantGeometry):
        return WarpedGeometry(g.n, g.r1, g.r2, ConstantWarp(g.c),
                              fiber or round_sphere(g.n - 1))
    path = Path(g.path)
    warp = _read_table(path if path.is_absolute() else base_dir / path)
    return WarpedGeometry(g.n, float(warp.r[0]), float(warp.r[-1]), warp,
                          fiber or round_sphere(g.n - 1))


def to_radial(geom: WarpedGeometry, values: List[float], coordinate: str) -> List[float]:
    if coordinate == "r":
        return [float(v) for v in values]
    return areal_to_radial(geom, values).tolist()
