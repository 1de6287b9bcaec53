"""Command line entry point: ``ssem solve | study | extend | kernel-cache``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import harness
from .errors import SSEMError
from .extension import extend, sobolev_seminorm
from .geometry import classify_interior, get_domain
from .kernel import STORE_M, build_kernel_table, default_cache_dir, load_kernel_table
from .torus import Grid

log = logging.getLogger("ssem")

CONFIG_KEYS = {"problem", "ms", "ps", "solver", "density", "tol", "max_iter", "output_dir", "kernel_cache"}


def load_config(path) -> dict:
    """Read a YAML mapping of experiment settings."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    return data


def _merge(args, keys):
    """Config file values, overridden by any flags given on the command line."""
    merged = load_config(args.config) if args.config else {}
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _add_common(p):
    p.add_argument("--config", help="YAML file with experiment settings")
    p.add_argument("--problem", help="exp1..exp6, extension or mismatch-demo")
    p.add_argument("--solver", choices=("qr", "pcg"))
    p.add_argument("--density", type=float, help="boundary density: multiple of m/(2 pi) per unit length in 2D, points per unit area in 3D")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--output", dest="output_dir", help="directory for CSV output")
    p.add_argument("--kernel-cache", dest="kernel_cache")


def _print_rows(rows):
    print(",".join(harness.CSV_COLUMNS))
    for row in rows:
        rec = row.csv_record()
        print(",".join(str(rec[k]) for k in harness.CSV_COLUMNS))
        if row.failed:
            print(f"# failed: {row.message}", file=sys.stderr)


def cmd_solve(args):
    cfg = _merge(args, ("problem", "solver", "density", "tol", "max_iter", "output_dir", "kernel_cache"))
    if args.m is not None:
        cfg["ms"] = [args.m]
    if args.p is not None:
        cfg["ps"] = [args.p]
    for key in ("ms", "ps"):
        if len(cfg.get(key, [])) != 1:
            raise ValueError(f"solve needs exactly one value for {key[:-1]}; use 'study' for sweeps")
    if "problem" not in cfg:
        raise ValueError("no problem given")
    report = harness.run_problem(harness.ExperimentConfig(**cfg))
    _print_rows(report.rows)
    return 1 if any(r.failed for r in report.rows) else 0


def cmd_study(args):
    cfg = _merge(args, ("problem", "solver", "density", "tol", "max_iter", "output_dir", "kernel_cache"))
    if args.ms:
        cfg["ms"] = args.ms
    if args.ps:
        cfg["ps"] = args.ps
    if "problem" not in cfg:
        raise ValueError("no problem given")
    report = harness.run_problem(harness.ExperimentConfig(**cfg))
    _print_rows(report.rows)
    for (p, solver), slope in sorted(report.slopes.items()):
        print(f"# slope p={p} {solver}: {'n/a' if slope is None else f'{slope:.3f}'}")
    return 0


def cmd_extend(args):
    domain = get_domain(args.domain)
    if args.input:
        field = np.load(args.input)
        m = field.shape[0]
        grid = Grid(domain.d, m)
        if field.shape != grid.shape:
            raise ValueError(f"input field has shape {field.shape}, expected {grid.shape}")
        interior = classify_interior(grid, domain)
        values = field.reshape(-1)[interior.flat]
    else:
        grid = Grid(domain.d, args.m)
        interior = classify_interior(grid, domain)
        values = 0.25 * (1.0 - np.sum(interior.points**2, axis=1))
    kwargs = {}
    if args.solver == "pcg":
        kwargs = {"tol": args.tol, "max_iter": args.max_iter, "cache_dir": args.kernel_cache}
    u = extend(values, args.p, args.solver, grid=grid, interior=interior, **kwargs)
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        np.save(out, u)
    misfit = float(np.abs(u.reshape(-1)[interior.flat] - values).max())
    print(f"m={grid.m} p={args.p} solver={args.solver} interior={interior.count} misfit={misfit:.3e}")
    print("s,central,spectral")
    for s in (1, 2, 3, 4):
        print(f"{s},{sobolev_seminorm(u, grid, s, 'central'):.6g},{sobolev_seminorm(u, grid, s, 'spectral'):.6g}")
    return 0


def cmd_kernel_cache(args):
    cache = Path(args.kernel_cache) if args.kernel_cache else default_cache_dir()
    if args.action == "build":
        for p in args.p:
            table = build_kernel_table(p, args.d, store_m=args.store_m, cache_dir=cache)
            print(f"d={table.d} p={table.p} fine={table.fine_m} store={table.store_m} h(0)={table.values.flat[0]:.8g}")
        return 0
    files = sorted(cache.glob("kernel_*.bin")) if cache.exists() else []
    if not files:
        print(f"no kernel tables in {cache}")
    for path in files:
        try:
            t = load_kernel_table(path)
            print(f"{path.name}: d={t.d} p={t.p} fine={t.fine_m} store={t.store_m}")
        except (OSError, ValueError) as exc:
            print(f"{path.name}: unreadable ({exc})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssem", description="Smooth selection embedding solver for elliptic problems")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem at one grid size and order")
    _add_common(p)
    p.add_argument("--m", type=int)
    p.add_argument("--p", type=int)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("study", help="sweep grid sizes and orders, write CSV and fitted slopes")
    _add_common(p)
    p.add_argument("--ms", type=int, nargs="+")
    p.add_argument("--ps", type=int, nargs="+")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("extend", help="minimal-norm periodic extension of data on a domain")
    p.add_argument("--domain", default="disc")
    p.add_argument("--input", help=".npy field on the full grid; only interior values are used")
    p.add_argument("--m", type=int, default=128, help="grid size when no input is given")
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--solver", choices=("qr", "pcg"), default="qr")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=500)
    p.add_argument("--output", help=".npy file for the extended field")
    p.add_argument("--kernel-cache", dest="kernel_cache")
    p.set_defaults(func=cmd_extend)

    p = sub.add_parser("kernel-cache", help="prebuild or list fundamental-solution tables")
    p.add_argument("action", choices=("build", "list"))
    p.add_argument("--p", type=int, nargs="+", default=[1, 2, 3, 4])
    p.add_argument("--d", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--store-m", dest="store_m", type=int, default=STORE_M)
    p.add_argument("--kernel-cache", dest="kernel_cache")
    p.set_defaults(func=cmd_kernel_cache)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SSEMError, ValueError, KeyError, OSError) as exc:
        print(f"ssem: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
