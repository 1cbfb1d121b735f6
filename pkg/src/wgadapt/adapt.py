"""Marking strategy and the solve-estimate-mark-refine loop.

Marking follows a fixed-fraction rule on the composite cell indicator
eta_T^2 = eta_T1^2 + eta_T2^2 + (1/2) sum of the cell's interior facet
terms; the top ceil(fraction * N) cells are refined, ties broken by cell
id so runs are bit-for-bit reproducible.
"""
from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .assembly import WgAssembler
from .bench import Benchmark, energy_error, star_surrogate
from .dofmap import WgFunction
from .estimator import EstimatorReport, global_estimate
from .linsolve import solve
from .mesh import Mesh, refine, uniform_grid

CSV_HEADER = "level,dofs,eta,energy_err,star_err,osc,effectivity"


class AdaptiveLoopError(RuntimeError):
    def __init__(self, level: int, cause: Exception):
        super().__init__(f"level {level}: {cause}")
        self.level = level
        self.cause = cause


@dataclass
class ConvergenceRecord:
    level: int
    dofs: int
    eta: float
    energy_err: float       # nan when no exact solution
    star_err: float         # nan when no exact solution
    osc: float
    effectivity: float      # (eta + osc) / (energy_err + star_err), or nan
    wall_time: float

    def csv_row(self) -> str:
        return ",".join([str(self.level), str(self.dofs)]
                        + [repr(float(v)) for v in
                           (self.eta, self.energy_err, self.star_err,
                            self.osc, self.effectivity)])


def mark(report: EstimatorReport, fraction: float, mesh: Mesh) -> list[int]:
    """Ids of the top ceil(fraction * N) leaves by composite indicator."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    n = len(report.cell_ids)
    if n == 0:
        return []
    ind = report.cell_indicators(mesh)
    order = np.lexsort((report.cell_ids, -ind))
    take = math.ceil(fraction * n)
    return sorted(int(report.cell_ids[i]) for i in order[:take])


def adaptive_loop(bench: Benchmark, k: int, levels: int, fraction: float = 0.25,
                  n0: int = 16, mode: str = "adaptive",
                  edge_weight_mode: str = "literal", solver_tol: float = 1e-10,
                  outdir: str | None = None, dump_meshes: bool = False,
                  verbose: bool = False) -> list[ConvergenceRecord]:
    """Run `levels` solve-estimate-record iterations, refining in between.

    With mode="uniform" every leaf is refined each level regardless of
    fraction.  Writes <outdir>/convergence.csv (plus per-level mesh and
    indicator dumps when requested) if outdir is given.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if mode not in ("adaptive", "uniform"):
        raise ValueError(f"unknown mode {mode!r}")
    mesh = uniform_grid(n0)
    records: list[ConvergenceRecord] = []
    csv_path = None
    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        csv_path = os.path.join(outdir, "convergence.csv")
        with open(csv_path, "w") as fh:
            fh.write(CSV_HEADER + "\n")

    for level in range(levels):
        t0 = time.perf_counter()
        try:
            asm = WgAssembler(mesh, bench.problem, k)
            rep = solve(asm.assemble(), tol=solver_tol)
            u_h = WgFunction(asm.dofmap, rep.full)
            est = global_estimate(mesh, u_h, bench.problem, k, asm,
                                  edge_weight_mode)
        except Exception as exc:
            raise AdaptiveLoopError(level, exc) from exc
        if bench.exact is not None:
            err = energy_error(u_h, bench, mesh, k, asm)
            star = star_surrogate(u_h, bench, mesh, k)
            eff = (est.eta_h + est.osc) / (err + star) if err + star > 0 \
                else float("nan")
        else:
            err = star = eff = float("nan")
        rec = ConvergenceRecord(level, asm.dofmap.ndofs, est.eta_h, err, star,
                                est.osc, eff, time.perf_counter() - t0)
        records.append(rec)
        if verbose:
            print(f"level {level}: cells {mesh.num_leaves} dofs {rec.dofs} "
                  f"eta {rec.eta:.3e} err {rec.energy_err:.3e}")
        if csv_path is not None:
            with open(csv_path, "a") as fh:
                fh.write(rec.csv_row() + "\n")
            if dump_meshes:
                mesh.save_text(os.path.join(outdir, f"mesh_{level}.txt"))
                est.save_csv(os.path.join(outdir, f"indicators_{level}.csv"))
                u_h.save_text(os.path.join(outdir, f"solution_{level}.txt"))

        if level + 1 < levels:
            if mode == "uniform":
                marked = [c.id for c in mesh.leaves]
            else:
                marked = mark(est, fraction, mesh)
            mesh = refine(mesh, marked)
    return records
