"""Sparse solve of the nonsymmetric WG system.

Direct LU (SuperLU) by default; systems above a configurable size cap fall
back to restarted GMRES with an incomplete-LU preconditioner.  Every solve
checks its relative residual.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SparseSystem


class SingularMatrixError(RuntimeError):
    pass


class SolverConvergenceError(RuntimeError):
    def __init__(self, msg, residuals):
        super().__init__(msg)
        self.residuals = residuals


@dataclass
class SolveReport:
    x: np.ndarray               # reduced (free-dof) solution
    full: np.ndarray            # solution embedded with Dirichlet values
    rel_residual: float
    method: str
    iterations: int = 0


def solve(system: SparseSystem, tol: float = 1e-10,
          direct_dof_cap: int = 1_000_000) -> SolveReport:
    if tol <= 0:
        raise ValueError("tol must be positive")
    A, b = system.A.tocsc(), system.rhs
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("system must be square")

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x = np.zeros(n)
        return SolveReport(x, system.embed(x), 0.0, "trivial")

    method = "splu"
    iterations = 0
    x = None
    if n <= direct_dof_cap:
        try:
            lu = spla.splu(A, permc_spec="COLAMD")
            x = lu.solve(b)
        except RuntimeError as exc:
            if "singular" in str(exc).lower():
                raise SingularMatrixError(str(exc)) from exc
            raise
        except MemoryError:
            x = None
    if x is None or not np.all(np.isfinite(x)):
        method = "gmres+ilu"
        residuals: list[float] = []
        try:
            ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=30)
        except RuntimeError as exc:
            if "singular" in str(exc).lower():
                raise SingularMatrixError(str(exc)) from exc
            raise
        M = spla.LinearOperator(A.shape, ilu.solve)

        def cb(r):
            residuals.append(float(r))
        x, info = spla.gmres(A, b, M=M, rtol=tol, atol=0.0, restart=100,
                             maxiter=400, callback=cb, callback_type="pr_norm")
        iterations = len(residuals)
        if info != 0:
            raise SolverConvergenceError(
                f"gmres failed to converge (info={info})", residuals)

    rel = float(np.linalg.norm(A @ x - b) / bnorm)
    if rel > max(tol, 1e-10):
        raise SolverConvergenceError(
            f"solver residual {rel:.3e} above tolerance", [rel])
    return SolveReport(x, system.embed(x), rel, method, iterations)
