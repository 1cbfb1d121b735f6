"""Command-line front end for uniform and adaptive convergence studies.

Example:

    wg-run --benchmark boundary_layer --eps 1e-3 --k 2 --levels 11 \
           --mode adaptive --outdir out/blayer

Configuration can also come from a plain key=value file via --config;
explicit flags override file entries.  Exit codes: 0 success, 2 invalid
configuration, 3 solver failure.
"""
from __future__ import annotations

import argparse
import os
import sys

from .adapt import AdaptiveLoopError, adaptive_loop
from .bench import BENCHMARKS, manufactured_poly

_FLAG_KEYS = {"benchmark", "eps", "k", "levels", "mode", "fraction", "n0",
              "outdir", "dump_meshes", "edge_weight_mode", "solver_tol"}


class ConfigError(ValueError):
    pass


def _apply_thread_cap() -> None:
    cap = os.environ.get("WG_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(int(cap))
    except ImportError:
        pass


def read_config_file(path: str) -> dict:
    """key=value lines; blank lines and # comments ignored."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _FLAG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wg-run",
        description="Adaptive WG convection-diffusion convergence studies.")
    p.add_argument("--config", help="optional key=value config file")
    p.add_argument("--benchmark",
                   choices=["boundary_layer", "internal_layer", "manufactured"])
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--mode", choices=["adaptive", "uniform"], default="adaptive")
    p.add_argument("--fraction", type=float, default=0.25)
    p.add_argument("--n0", type=int, default=16)
    p.add_argument("--outdir", default=None)
    p.add_argument("--dump-meshes", action="store_true", default=None)
    p.add_argument("--edge-weight-mode", choices=["literal", "squared"],
                   default="literal")
    p.add_argument("--solver-tol", type=float, default=1e-10)
    return p


_CASTS = {"eps": float, "k": int, "levels": int, "fraction": float, "n0": int,
          "solver_tol": float,
          "dump_meshes": lambda s: s.lower() in ("1", "true", "yes")}


def resolve_config(argv: list[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        file_cfg = read_config_file(args.config)
        defaults = parser.parse_args([])
        for key, raw in file_cfg.items():
            # a flag given on the command line wins over the file
            if getattr(args, key) != getattr(defaults, key):
                continue
            setattr(args, key, _CASTS.get(key, str)(raw))
    if args.dump_meshes is None:
        args.dump_meshes = False
    if args.benchmark is None:
        raise ConfigError("missing benchmark name")
    if args.eps <= 0:
        raise ConfigError("eps must be positive")
    if args.k < 1:
        raise ConfigError("k must be >= 1")
    if args.levels < 1:
        raise ConfigError("levels must be >= 1")
    if not 0.0 < args.fraction <= 1.0:
        raise ConfigError("fraction must be in (0, 1]")
    if args.n0 < 1:
        raise ConfigError("n0 must be >= 1")
    if args.solver_tol <= 0:
        raise ConfigError("solver-tol must be positive")
    return args


def make_benchmark(args: argparse.Namespace):
    if args.benchmark == "manufactured":
        return manufactured_poly(args.k)
    return BENCHMARKS[args.benchmark](args.eps)


def run(args: argparse.Namespace) -> int:
    _apply_thread_cap()
    bench = make_benchmark(args)
    try:
        records = adaptive_loop(
            bench, args.k, args.levels, fraction=args.fraction, n0=args.n0,
            mode=args.mode, edge_weight_mode=args.edge_weight_mode,
            solver_tol=args.solver_tol, outdir=args.outdir,
            dump_meshes=args.dump_meshes)
    except AdaptiveLoopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"{'level':>5} {'dofs':>9} {'eta':>12} {'energy_err':>12} "
          f"{'star_err':>12} {'osc':>12} {'effectivity':>12}")
    for r in records:
        print(f"{r.level:>5} {r.dofs:>9} {r.eta:>12.4e} {r.energy_err:>12.4e} "
              f"{r.star_err:>12.4e} {r.osc:>12.4e} {r.effectivity:>12.4e}")
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        args = resolve_config(argv)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
