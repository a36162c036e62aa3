"""Command line entry point: ``warped-rigidity <spectrum|scan|verify> --config <path>``.

Exit codes: 0 success, 1 failed check, 2 configuration error, 3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .benchmarks import constant_coefficient_eigenvalues, random_problem, random_trial
from .config import (CHECK_NAMES, RunConfig, VerifySection, build_geometry, load_config,
                     to_radial)
from .errors import ConfigError, ConstraintError, FiberError, GeometryError, SolverError
from .geometry import ConstantWarp, weighted_volume
from .rigidity import (Classification, Convention, Crossing, GammaRecord, RigidityReport,
                       constant_scalar, constraint_constants, jacobi_problem, quadratic_form,
                       scan)
from .slp import MixedProblem, find_eigenvalues, lower_bound, rayleigh_quotient
from .spectrum import ConstraintConstants, SpectrumTable, assemble, mark_admissible

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

SPECTRUM_COLUMNS = ["fiber_index", "radial_index", "eigenvalue", "node_count", "admissible"]
SCAN_COLUMNS = ["gamma", "H", "a", "b", "lambda", "cutoff_i0", "min_detector_abs",
                "min_admissible_eigenvalue", "negative_admissible_count", "classification"]


# --- formatting -------------------------------------------------------------

def fmt(x: Optional[float]) -> str:
    """17 significant digits; empty for missing values."""
    if x is None:
        return ""
    x = float(x) + 0.0  # drops the sign of zero
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _num(x: Optional[float]):
    """JSON-safe float: finite values stay numbers, others become strings."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else fmt(x)


def _write_csv(path: Path, header: List[str], rows: List[List[str]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _constants_dict(c: Optional[ConstraintConstants]):
    if c is None:
        return None
    return {"a": _num(c.a), "b": _num(c.b), "lambda": _num(c.lam),
            "volume": _num(c.volume), "area": _num(c.area)}


def _constants_from(d) -> Optional[ConstraintConstants]:
    if d is None:
        return None
    return ConstraintConstants(*(float(d[k]) for k in ("a", "b", "lambda", "volume", "area")))


def _tolerances_dict(cfg: RunConfig) -> dict:
    return {k: _num(v) for k, v in cfg.tolerances.model_dump().items()}


# --- spectrum ---------------------------------------------------------------

def spectrum_rows(table: SpectrumTable) -> List[List[str]]:
    return [[str(e.fiber_index), str(e.radial_index), fmt(e.value), str(e.node_count),
             "" if e.admissible is None else str(bool(e.admissible)).lower()]
            for e in table.entries]


def run_spectrum(cfg: RunConfig, base_dir: Path) -> tuple:
    sec = cfg.spectrum
    if sec is None:
        raise ConfigError("spectrum: section missing")
    geom = build_geometry(cfg, base_dir)
    gamma = to_radial(geom, [sec.gamma], sec.coordinate)[0]
    geom.check_radius(gamma, lo_open=True)
    solver = cfg.tolerances.solver()
    if sec.problem is None:
        jp = jacobi_problem(geom, gamma, sec.convention)
        G, J1, J2, R, H = jp.problem.G, jp.problem.J1, jp.problem.J2, jp.R, jp.H
    else:
        G, J1, J2 = sec.problem.G, sec.problem.J1, sec.problem.J2
        R = H = None
    if sec.constraint is not None:
        V = geom.fiber.volume * weighted_volume(geom, gamma)
        A = geom.fiber.volume * float(geom.alpha.alpha(gamma)) ** (geom.n - 1)
        constants = ConstraintConstants(sec.constraint.a, sec.constraint.b, math.nan, V, A)
        degenerate = False
    else:
        if R is None:
            R = constant_scalar(geom)
            H = jacobi_problem(geom, gamma, sec.convention, R).H
        constants, _ = constraint_constants(geom, gamma, R, H)
        degenerate = constants is None and abs(R) <= 1e-8 and abs(H) <= 1e-8
    table = assemble(geom, gamma, G, J1, J2, sec.fiber_count, sec.radial_count,
                     fast=sec.fast, tol=solver)
    if constants is not None or degenerate:
        mark_admissible(table, constants, geom, gamma, cfg.tolerances.admissibility_tol)
    else:
        for e in table.entries:
            e.admissible = True
    meta = {
        "command": "spectrum",
        "gamma": _num(gamma),
        "floor": _num(table.floor),
        "cutoff_i0": table.cutoff_i0,
        "skipped_modes": table.skipped_modes,
        "fiber_values": [_num(v) for v in table.fiber_values],
        "constants": _constants_dict(constants),
        "problem": {"G": _num(G) if not callable(G) else "callable",
                    "J1": _num(J1), "J2": _num(J2)},
        "tolerances": _tolerances_dict(cfg),
    }
    return table, meta


def cmd_spectrum(cfg: RunConfig, base_dir: Path, out: Path) -> int:
    table, meta = run_spectrum(cfg, base_dir)
    _write_csv(out / "spectrum.csv", SPECTRUM_COLUMNS, spectrum_rows(table))
    _write_json(out / "spectrum.json", meta)
    print(f"wrote {len(table.entries)} eigenpairs to {out / 'spectrum.csv'}")
    return EXIT_OK


# --- scan -------------------------------------------------------------------

def scan_rows(report: RigidityReport) -> List[List[str]]:
    rows = []
    for rec in report.records:
        c = rec.constants
        rows.append([fmt(rec.gamma), fmt(rec.H),
                     fmt(c.a if c else None), fmt(c.b if c else None), fmt(c.lam if c else None),
                     str(rec.cutoff_i0), fmt(rec.min_detector_abs),
                     fmt(rec.min_admissible_eigenvalue), str(rec.negative_admissible_count),
                     rec.classification.value])
    return rows


def report_to_dict(report: RigidityReport, cfg: Optional[RunConfig] = None) -> dict:
    out = {
        "command": "scan",
        "R": _num(report.R),
        "convention": report.convention.value,
        "gamma_grid": [_num(g) for g in report.gamma_grid],
        "records": [{
            "gamma": _num(r.gamma),
            "H": _num(r.H),
            "constants": _constants_dict(r.constants),
            "cutoff_i0": r.cutoff_i0,
            "detectors": {
                "fiber_index": [i for i, _ in r.detectors],
                "value": [_num(d) for _, d in r.detectors],
                "scale": [_num(s) for s in r.detector_scales],
            },
            "min_admissible_eigenvalue": _num(r.min_admissible_eigenvalue),
            "negative_admissible_count": r.negative_admissible_count,
            "classification": r.classification.value,
            "offending_modes": list(r.offending_modes),
            "note": r.note,
        } for r in report.records],
        "crossings": [{"fiber_index": c.fiber_index, "gamma": _num(c.gamma),
                       "admissible": c.admissible} for c in report.crossings],
    }
    if cfg is not None:
        out["tolerances"] = _tolerances_dict(cfg)
    return out


def report_from_dict(d: dict) -> RigidityReport:
    records = []
    for r in d["records"]:
        det = r["detectors"]
        records.append(GammaRecord(
            float(r["gamma"]), float(r["H"]), _constants_from(r["constants"]), r["cutoff_i0"],
            [(i, float(v)) for i, v in zip(det["fiber_index"], det["value"])],
            [float(s) for s in det["scale"]],
            float(r["min_admissible_eigenvalue"]), r["negative_admissible_count"],
            Classification(r["classification"]), list(r["offending_modes"]), r["note"]))
    crossings = [Crossing(c["fiber_index"], float(c["gamma"]), c["admissible"])
                 for c in d["crossings"]]
    return RigidityReport([float(g) for g in d["gamma_grid"]], records, crossings,
                          float(d["R"]), Convention(d["convention"]))


def run_scan(cfg: RunConfig, base_dir: Path) -> RigidityReport:
    sec = cfg.scan
    if sec is None:
        raise ConfigError("scan: section missing")
    geom = build_geometry(cfg, base_dir)
    try:
        grid = to_radial(geom, sec.values(), sec.coordinate)
    except GeometryError as exc:
        raise ConfigError(f"scan.gamma: {exc}") from exc
    bad = [g for g in grid if not geom.r1 < g < geom.r2]
    if bad:
        raise ConfigError(f"scan.gamma: {bad} outside ({geom.r1:.17g}, {geom.r2:.17g})")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("scan.gamma: grid must be strictly increasing")
    tol = cfg.tolerances
    return scan(geom, grid, sec.fiber_count, sec.convention, sec.full_solve,
                sec.radial_count, tol.detector_tol, tol.admissibility_tol, tol.solver())


def cmd_scan(cfg: RunConfig, base_dir: Path, out: Path) -> int:
    report = run_scan(cfg, base_dir)
    _write_csv(out / "scan.csv", SCAN_COLUMNS, scan_rows(report))
    _write_json(out / "scan.json", report_to_dict(report, cfg))
    counts: Dict[str, int] = {}
    for c in report.classifications:
        counts[c.value] = counts.get(c.value, 0) + 1
    summary = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))
    print(f"scanned {len(report.records)} slabs ({summary})")
    return EXIT_OK


# --- verify -----------------------------------------------------------------

class CheckResult:
    def __init__(self, name: str, passed: bool, residual: float, limit: float, detail: str = ""):
        self.name, self.passed, self.residual, self.limit, self.detail = (
            name, passed, residual, limit, detail)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: residual={self.residual:.3e} limit={self.limit:.1e}{extra}"


class _VerifyData:
    """Eigenpairs shared by several checks, computed once."""

    def __init__(self, cfg: RunConfig, base_dir: Path, sec: VerifySection):
        self.cfg, self.sec = cfg, sec
        self.solver = cfg.tolerances.solver()
        self.geom = build_geometry(cfg, base_dir)
        if sec.gamma is None:
            self.gamma = self.geom.r2
        else:
            self.gamma = to_radial(self.geom, [sec.gamma], sec.coordinate)[0]
        self.R = constant_scalar(self.geom)
        self.jacobi = jacobi_problem(self.geom, self.gamma, Convention.PER_BIFVARIATION, self.R)
        self._table: Optional[SpectrumTable] = None
        self._random: Optional[list] = None

    @property
    def table(self) -> SpectrumTable:
        if self._table is None:
            p = self.jacobi.problem
            self._table = assemble(self.geom, self.gamma, p.G, p.J1, p.J2, self.sec.fiber_count,
                                   self.sec.radial_count, tol=self.solver)
        return self._table

    @property
    def random(self) -> list:
        if self._random is None:
            rng = np.random.default_rng(self.sec.seed)
            self._random = []
            for _ in range(self.sec.random_problems):
                prob = random_problem(rng).problem
                self._random.append((prob, find_eigenvalues(prob, self.sec.radial_count,
                                                            tol=self.solver)))
        return self._random

    def problems(self):
        """(problem, eigenpairs) for the Jacobi modes and the random batch."""
        out = []
        for i, beta in enumerate(self.table.fiber_values):
            pairs = [e for e in self.table.entries if e.fiber_index == i]
            pairs.sort(key=lambda e: e.radial_index)
            out.append((self.jacobi.for_mode(beta), pairs))
        return out + self.random


def _check_lower_bound(d: _VerifyData) -> CheckResult:
    worst = math.inf
    for prob, pairs in d.problems():
        worst = min(worst, min(e.value for e in pairs) - lower_bound(prob))
    return CheckResult("lower_bound", worst >= -1e-9, max(0.0, -worst), 1e-9,
                       f"min gap {worst:.3e}")


def _check_nodal(d: _VerifyData) -> CheckResult:
    bad = sum(e.node_count != e.radial_index - 1 for _, pairs in d.problems() for e in pairs)
    return CheckResult("nodal", bad == 0, float(bad), 0.0, "mismatched node counts")


def _check_monotonicity(d: _VerifyData) -> CheckResult:
    firsts = list(d.table.first_eigenvalues().values())
    drop = max([0.0] + [a - b for a, b in zip(firsts, firsts[1:])])
    return CheckResult("monotonicity", drop <= 1e-9, drop, 1e-9,
                       f"{len(firsts)} fiber modes")


def _check_rayleigh(d: _VerifyData) -> CheckResult:
    # quotient of the first eigenfunction against its eigenvalue, and random
    # trials never dipping below the first eigenvalue
    worst, dip = 0.0, 0.0
    rng = np.random.default_rng(d.sec.seed)
    for prob, pairs in d.problems():
        e = pairs[0]
        worst = max(worst, abs(rayleigh_quotient(prob, e.solution) - e.value) / (1 + abs(e.value)))
        for _ in range(d.sec.rayleigh_trials):
            dip = max(dip, e.value - rayleigh_quotient(prob, random_trial(prob, rng)))
    passed = worst <= 1e-6 and dip <= 1e-8
    return CheckResult("rayleigh", passed, worst, 1e-6, f"max trial dip {dip:.3e}, limit 1e-8")


def _check_quadratic_form(d: _VerifyData) -> CheckResult:
    worst = 0.0
    for e in d.table.entries:
        qf = quadratic_form(d.geom, d.gamma, e, d.R)
        worst = max(worst, abs(qf.residual) / (1 + abs(e.value)))
    return CheckResult("quadratic_form", worst <= 1e-6, worst, 1e-6)


def _check_oracle(d: _VerifyData) -> CheckResult:
    length, G, J1, J2 = 1.0, 0.3, -1.0, 0.5
    prob = MixedProblem(3, 0.0, length, ConstantWarp(1.0), 0.0, G, J1, J2)
    computed = [e.value for e in find_eigenvalues(prob, 5, tol=d.solver)]
    exact = constant_coefficient_eigenvalues(5, length, -G, J1, J2)
    worst = max(abs(c - x) / max(abs(x), 1.0) for c, x in zip(computed, exact))
    return CheckResult("oracle", worst <= 1e-8, worst, 1e-8, "constant-coefficient roots")


CHECKS: Dict[str, Callable[[_VerifyData], CheckResult]] = {
    "lower_bound": _check_lower_bound,
    "nodal": _check_nodal,
    "monotonicity": _check_monotonicity,
    "rayleigh": _check_rayleigh,
    "quadratic_form": _check_quadratic_form,
    "oracle": _check_oracle,
}
assert tuple(CHECKS) == CHECK_NAMES


def run_verify(cfg: RunConfig, base_dir: Path) -> List[CheckResult]:
    sec = cfg.verify or VerifySection()
    if not sec.checks:
        return []
    data = _VerifyData(cfg, base_dir, sec)
    return [CHECKS[name](data) for name in sec.checks]


def cmd_verify(cfg: RunConfig, base_dir: Path, out: Optional[Path]) -> int:
    results = run_verify(cfg, base_dir)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results)} checks, {failed} failed")
    return EXIT_CHECK if failed else EXIT_OK


# --- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warped-rigidity",
                                     description="Spectra and rigidity scans of warped slabs.")
    parser.add_argument("command", choices=["spectrum", "scan", "verify"])
    parser.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, base_dir = load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, base_dir, args.out)
        if args.command == "scan":
            return cmd_scan(cfg, base_dir, args.out)
        return cmd_verify(cfg, base_dir, args.out)
    except (ConfigError, GeometryError, FiberError, ConstraintError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
