"""Convergence studies: solve catalog problems over grids and orders, measure errors, fit rates."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .constraints import build_system
from .errors import DegenerateMaskError, InsufficientDataError, OutOfRangeError, SSEMError
from .extension import extend, sobolev_seminorm
from .geometry import InteriorIndexSet, classify_interior, disc, discretize_boundary
from .problems import PROBLEMS, get_problem
from .solver_pcg import PCG_ORDERS, pcg_solve
from .solver_qr import solve_qr
from .torus import Grid, evaluate_offgrid

__all__ = [
    "CSV_COLUMNS",
    "ConvergenceReport",
    "ExperimentConfig",
    "ReportRow",
    "curve_samples",
    "error_norms",
    "fit_rate",
    "mismatch_demo",
    "near_boundary_nodes",
    "reference_nonsmooth",
    "run_problem",
    "solve_problem",
    "write_csv",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "problem",
    "m",
    "p",
    "solver",
    "n_interior",
    "n_boundary",
    "l2_error",
    "linf_error",
    "residual",
    "iterations",
    "cond_estimate",
    "seconds",
)
SPECIAL_PROBLEMS = ("extension", "mismatch-demo")
PLATEAU_FACTOR = 1e-12


@dataclass
class ExperimentConfig:
    problem: str
    ms: Sequence[int] = (16, 32, 64, 128)
    ps: Sequence[int] = (2, 4)
    solver: str = "qr"
    density: Optional[float] = None
    tol: float = 1e-10
    max_iter: int = 500
    output_dir: Optional[str] = None
    kernel_cache: Optional[str] = None

    def __post_init__(self):
        self.ms = tuple(int(m) for m in self.ms)
        self.ps = tuple(int(p) for p in self.ps)
        self.validate()

    def validate(self):
        if self.problem not in PROBLEMS and self.problem not in SPECIAL_PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS) + list(SPECIAL_PROBLEMS)}")
        if self.solver not in ("qr", "pcg"):
            raise ValueError(f"solver must be 'qr' or 'pcg', got {self.solver!r}")
        if not self.ms or any(m < 8 or m % 2 for m in self.ms):
            raise ValueError(f"grid sizes must be even and >= 8, got {self.ms}")
        if not self.ps:
            raise ValueError("need at least one smoother order")
        for p in self.ps:
            if self.solver == "qr" and not 0 <= p <= 10:
                raise ValueError(f"QR supports p in 0..10, got {p}")
            if self.solver == "pcg" and p not in PCG_ORDERS:
                raise ValueError(f"PCG supports p in {PCG_ORDERS}, got {p}")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")


@dataclass
class ReportRow:
    problem: str
    m: int
    p: int
    solver: str
    n_interior: int
    n_boundary: int
    l2_error: float = math.nan
    linf_error: float = math.nan
    residual: float = math.nan
    iterations: Optional[int] = None
    cond_estimate: Optional[float] = None
    seconds: float = math.nan
    failed: bool = False
    message: str = ""

    def csv_record(self):
        rec = {k: getattr(self, k) for k in CSV_COLUMNS}
        if self.failed:
            rec["l2_error"] = rec["linf_error"] = "failed"
        for k in ("iterations", "cond_estimate"):
            if rec[k] is None:
                rec[k] = ""
        for k in ("l2_error", "linf_error", "residual", "cond_estimate"):
            if isinstance(rec[k], float):
                rec[k] = "" if math.isnan(rec[k]) else f"{rec[k]:.6e}"
        rec["seconds"] = f"{self.seconds:.3f}"
        return rec


@dataclass
class ConvergenceReport:
    problem: str
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def slope(self, p: int, solver: str) -> Optional[float]:
        return self.slopes.get((p, solver))


def error_norms(u, exact, interior: InteriorIndexSet, grid: Grid, mask=()):
    """Discrete ``L2`` (with cell volume) and max errors over unmasked interior nodes.

    ``mask`` is a sequence of ``(center, radius)`` balls to leave out.
    """
    pts = interior.points
    keep = np.ones(interior.count, dtype=bool)
    for center, radius in mask:
        keep &= np.linalg.norm(pts - np.asarray(center, dtype=float), axis=1) >= radius
    if not keep.any():
        raise DegenerateMaskError("the mask removes every interior node")
    vals = np.asarray(u, dtype=float).reshape(-1)[interior.flat[keep]]
    diff = vals - np.broadcast_to(np.asarray(exact(*pts[keep].T), dtype=float), vals.shape)
    l2 = float(np.sqrt(grid.cell_volume * np.sum(diff**2)))
    return l2, float(np.abs(diff).max())


def reference_nonsmooth(r, theta):
    """Sine series of the harmonic function with boundary values ``sign(sin theta)``.

    Summed until the tail bound drops below ``1e-12``.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(r >= 1) or np.any(r < 0):
        raise OutOfRangeError("the series needs 0 <= r < 1")
    r_max = float(r.max(initial=0.0))
    n_terms = 1
    if r_max > 0:
        while (4 / np.pi) * r_max**n_terms / (n_terms * (1 - r_max)) >= 1e-12:
            n_terms += 1
    r, theta = np.broadcast_arrays(r, theta)
    out = np.zeros(r.shape)
    for k in range(1, n_terms + 1, 2):
        out += 4 / (k * np.pi) * r**k * np.sin(k * theta)
    return out


def fit_rate(errors, ms, reference_norm: Optional[float] = None) -> float:
    """Least-squares slope of ``log(error)`` against ``log(1/m)``.

    With ``reference_norm`` given, errors below ``1e-12 * reference_norm`` count
    as plateau and are dropped.  Non-finite errors are always dropped.
    """
    e = np.asarray(errors, dtype=float)
    m = np.asarray(ms, dtype=float)
    keep = np.isfinite(e) & (e > 0)
    if reference_norm is not None:
        keep &= e > PLATEAU_FACTOR * reference_norm
    if keep.sum() < 3:
        raise InsufficientDataError(f"need 3 usable points to fit a rate, have {int(keep.sum())}")
    slope = np.polyfit(np.log(1.0 / m[keep]), np.log(e[keep]), 1)[0]
    return float(slope)


def near_boundary_nodes(grid: Grid, interior: InteriorIndexSet, band: int = 2) -> np.ndarray:
    """Boolean mask of interior nodes with a non-interior node within ``band`` steps along an axis."""
    inside = np.zeros(grid.n_nodes, dtype=bool)
    inside[interior.flat] = True
    inside = inside.reshape(grid.shape)
    near = np.zeros(grid.shape, dtype=bool)
    for a in range(grid.d):
        for step in range(1, band + 1):
            near |= ~np.roll(inside, step, axis=a) | ~np.roll(inside, -step, axis=a)
    return near.reshape(-1)[interior.flat]


def solve_problem(
    name: str,
    m: int,
    p: int,
    solver: str = "qr",
    density: Optional[float] = None,
    tol: float = 1e-10,
    max_iter: int = 500,
    kernel_cache=None,
):
    """Build and solve one catalog problem; returns ``(system, u, row)``."""
    prob = get_problem(name)
    grid = Grid(prob.d, m)
    domain = prob.domain()
    t0 = time.perf_counter()
    boundary = discretize_boundary(domain, m, solver, density)
    sys = build_system(grid, domain, prob.operator, boundary, prob.bc, prob.f, prob.g)
    row = ReportRow(name, m, p, solver, sys.n_interior, sys.n_boundary)
    if solver == "qr":
        rep = solve_qr(sys, p)
        u = rep.u
    else:
        rep = pcg_solve(sys, p, tol=tol, max_iter=max_iter, cache_dir=kernel_cache)
        u = rep.u
        row.iterations = rep.iterations
        row.cond_estimate = rep.condition_estimate
    row.seconds = time.perf_counter() - t0
    # a Neumann normalization shifts u by a constant, which C does not see
    row.residual = float(np.abs(sys.apply_C(u) - sys.rhs).max())
    row.l2_error, row.linf_error = error_norms(u, prob.exact, sys.interior, grid, prob.mask)
    return sys, u, row


def _exact_norm(name, m):
    prob = get_problem(name)
    grid = Grid(prob.d, m)
    interior = classify_interior(grid, prob.domain())
    vals = np.broadcast_to(np.asarray(prob.exact(*interior.points.T), dtype=float), (interior.count,))
    return float(np.sqrt(grid.cell_volume * np.sum(vals**2)))


def curve_samples(u, grid: Grid, radius: float = 0.9, n: int = 181):
    """Interpolated solution along ``r = radius``, ``0 <= theta <= pi``, with the series reference."""
    theta = np.linspace(0.0, np.pi, n)
    pts = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    approx = evaluate_offgrid(u, grid, pts)
    ref = reference_nonsmooth(np.full(n, radius), theta)
    return theta, approx, ref


def mismatch_demo(m: int = 64, ps=(0, 2), band: int = 2, problem: str = "exp1"):
    """Near-boundary max error of the QR solution for each ``p``.

    ``p = 0`` (no smoother) leaves the values just outside the domain free and
    they oscillate; the smoother removes this.
    """
    out = {}
    for p in ps:
        sys, u, _ = solve_problem(problem, m, p, "qr")
        prob = get_problem(problem)
        near = near_boundary_nodes(sys.grid, sys.interior, band)
        vals = u.reshape(-1)[sys.interior.flat[near]]
        exact = prob.exact(*sys.interior.points[near].T)
        out[p] = float(np.abs(vals - exact).max())
    return out


def run_problem(config: ExperimentConfig) -> ConvergenceReport:
    """Solve at every ``(m, p)`` of the config; failures become marked rows."""
    if config.problem == "extension":
        report = _run_extension(config)
    elif config.problem == "mismatch-demo":
        report = _run_mismatch(config)
    else:
        report = _run_catalog(config)
    if config.output_dir:
        write_report(report, config.output_dir)
    return report


def _run_catalog(config):
    report = ConvergenceReport(config.problem)
    curves = {}
    for p in config.ps:
        for m in config.ms:
            try:
                sys, u, row = solve_problem(
                    config.problem, m, p, config.solver, config.density, config.tol, config.max_iter, config.kernel_cache
                )
                if config.problem == "exp5":
                    curves[(m, p)] = curve_samples(u, sys.grid)
            except (SSEMError, MemoryError) as exc:
                log.warning("%s m=%d p=%d failed: %s", config.problem, m, p, exc)
                row = ReportRow(config.problem, m, p, config.solver, 0, 0, failed=True, message=str(exc))
            report.rows.append(row)
            log.info("%s m=%d p=%d l2=%.3e", config.problem, m, p, row.l2_error)
    _fill_slopes(report, config)
    if curves:
        report.extras["curves"] = curves
    return report


def _fill_slopes(report, config):
    ref = _exact_norm(config.problem, max(config.ms)) if config.problem in PROBLEMS else None
    for p in config.ps:
        rows = [r for r in report.rows if r.p == p and not r.failed]
        try:
            report.slopes[(p, config.solver)] = fit_rate([r.l2_error for r in rows], [r.m for r in rows], ref)
        except InsufficientDataError:
            report.slopes[(p, config.solver)] = None


def _run_extension(config):
    """Extend ``(1 - r^2)/4`` from the unit disc; errors are the misfit on the interior."""
    report = ConvergenceReport("extension")
    seminorms = []

    def data(x, y):
        return 0.25 * (1 - x**2 - y**2)

    for p in config.ps:
        for m in config.ms:
            grid = Grid(2, m)
            interior = classify_interior(grid, disc())
            row = ReportRow("extension", m, p, config.solver, interior.count, 0)
            t0 = time.perf_counter()
            try:
                kw = {"tol": config.tol, "max_iter": config.max_iter} if config.solver == "pcg" else {}
                u = extend(data, p, config.solver, grid=grid, interior=interior, **kw)
            except (SSEMError, MemoryError) as exc:
                row.failed, row.message = True, str(exc)
                report.rows.append(row)
                continue
            row.seconds = time.perf_counter() - t0
            row.l2_error, row.linf_error = error_norms(u, data, interior, grid)
            row.residual = row.linf_error
            report.rows.append(row)
            for method in ("central", "spectral"):
                seminorms.append(
                    {"m": m, "p": p, "method": method, **{f"s{s}": sobolev_seminorm(u, grid, s, method) for s in (2, 3, 4)}}
                )
    report.extras["seminorms"] = seminorms
    return report


def _run_mismatch(config):
    report = ConvergenceReport("mismatch-demo")
    ps = config.ps if config.ps else (0, 2)
    results = []
    for m in config.ms:
        for p in ps:
            _, _, row = solve_problem("exp1", m, p, "qr")
            row.problem = "mismatch-demo"
            report.rows.append(row)
        for p, err in mismatch_demo(m, ps).items():
            results.append({"m": m, "p": p, "near_boundary_linf": err})
    report.extras["near_boundary"] = results
    return report


def write_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.csv_record())
    return path


def _write_dicts(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(records[0]))
        writer.writeheader()
        writer.writerows(records)


def write_report(report: ConvergenceReport, output_dir) -> list:
    """Write the main CSV plus any side tables; returns the written paths."""
    out = Path(output_dir)
    paths = [write_csv(report.rows, out / f"{report.problem}.csv")]
    slopes = [
        {"p": p, "solver": s, "slope": "" if v is None else f"{v:.4f}"} for (p, s), v in sorted(report.slopes.items())
    ]
    if slopes:
        _write_dicts(slopes, out / f"{report.problem}_slopes.csv")
        paths.append(out / f"{report.problem}_slopes.csv")
    for (m, p), (theta, approx, ref) in report.extras.get("curves", {}).items():
        path = out / f"{report.problem}_curve_m{m}_p{p}.csv"
        _write_dicts(
            [{"theta": f"{t:.8f}", "approx": f"{a:.12e}", "reference": f"{r:.12e}"} for t, a, r in zip(theta, approx, ref)],
            path,
        )
        paths.append(path)
    for key in ("seminorms", "near_boundary"):
        recs = report.extras.get(key)
        if recs:
            path = out / f"{report.problem}_{key}.csv"
            _write_dicts(recs, path)
            paths.append(path)
    return paths
