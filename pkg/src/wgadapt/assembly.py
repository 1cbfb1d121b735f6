"""Global WG system assembly, bilinear form and energy norm evaluation.

The scheme: find u_h with a_h(u_h, v_h) = (f, v_h0) for all v_h with zero
boundary trace, where

    a_h(w, v) = eps (grad_w w, grad_w v) + (a w0 + div_w(b w), v0) + s(w, v)
    s(w, v)   = <tau_plus (w0 - wb), v0 - vb>_dT

Local matrices are cached per cell-geometry signature; on a dyadic quadtree
over a square there are only a handful of distinct signatures per level, so
assembly cost is dominated by right-hand-side quadrature and scatter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .dofmap import DofMap, WgFunction, apply_dirichlet, build_dofmap
from .mesh import Mesh
from .poly import (OVER_INT, CellBasis, FacetBasis, cell_quadrature,
                   facet_quadrature, l2_project_cell, l2_project_facet,
                   space_dim)
from .weakops import weak_divergence, weak_gradient


class ProblemDataError(ValueError):
    pass


@dataclass
class ProblemData:
    """Coefficients of -div(eps grad u) + div(b u) + a u = f, u = g on the
    boundary.  ``c0`` is the assumed lower bound of (1/2) div b + a (zero for
    divergence-free b with a = 0)."""

    eps: float
    b: Callable[[np.ndarray, np.ndarray], np.ndarray]
    a: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    c0: float = 0.0
    b_const: tuple[float, float] | None = None
    a_const: float | None = None

    def __post_init__(self):
        if self.eps <= 0:
            raise ProblemDataError("eps must be positive")
        if self.c0 < 0:
            raise ProblemDataError("c0 must be nonnegative")

    def validate(self, mesh: Mesh, k: int) -> None:
        """Spot-check (1/2) div b + a >= c0 at quadrature points."""
        if self.c0 == 0:
            return
        for pos in range(0, mesh.num_leaves, max(1, mesh.num_leaves // 16)):
            cell = mesh.leaves[pos]
            rule = cell_quadrature(2 * k, cell)
            x, y = rule.points[:, 0], rule.points[:, 1]
            if self.b_const is not None:
                divb = np.zeros_like(x)
            else:
                d = 1e-6 * min(cell.w, cell.h)
                divb = (np.asarray(self.b(x + d, y))[:, 0]
                        - np.asarray(self.b(x - d, y))[:, 0]) / (2 * d) \
                    + (np.asarray(self.b(x, y + d))[:, 1]
                       - np.asarray(self.b(x, y - d))[:, 1]) / (2 * d)
            aval = self.a_const if self.a_const is not None else np.asarray(self.a(x, y))
            if np.min(0.5 * divb + aval - self.c0) < -1e-12:
                raise ProblemDataError("(1/2) div b + a >= c0 violated")


def sup_b(mesh: Mesh, problem: ProblemData, k: int) -> float:
    """Componentwise sup of |b| over the mesh quadrature points."""
    if problem.b_const is not None:
        return float(np.max(np.abs(problem.b_const)))
    best = 0.0
    for cell in mesh.leaves:
        rule = cell_quadrature(2 * k + OVER_INT, cell)
        bv = np.asarray(problem.b(rule.points[:, 0], rule.points[:, 1]))
        best = max(best, float(np.max(np.abs(bv))))
    return best


def tau_plus(bn, h_T: float, eps: float, kappa: float, b_inf: float):
    """Stabilization weight on a facet point: upwind part plus mesh terms."""
    bn = np.asarray(bn, dtype=float)
    return np.where(bn >= 0, bn, 0.0) + eps / (kappa * h_T) \
        + (b_inf / eps + 1.0) * h_T + eps / h_T


def tau(bn, h_T: float, eps: float, kappa: float, b_inf: float):
    """Energy-norm facet weight: |b.n| plus the same mesh terms."""
    bn = np.asarray(bn, dtype=float)
    return np.abs(bn) + eps / h_T + eps / (kappa * h_T) + (b_inf / eps + 1.0) * h_T


def cell_signature(mesh: Mesh, pos: int):
    """Geometry key: cell size plus relative facet layout.  Cells with equal
    signatures share all translation-invariant local operators."""
    c = mesh.leaves[pos]
    sig = []
    for fid, nrm in mesh.cell_facets[pos]:
        f = mesh.facets[fid]
        if nrm[0] != 0.0:
            side = 0 if nrm[0] < 0 else 1
            t0 = (f.p0[1] - c.y) / c.h
            t1 = (f.p1[1] - c.y) / c.h
        else:
            side = 2 if nrm[1] < 0 else 3
            t0 = (f.p0[0] - c.x) / c.w
            t1 = (f.p1[0] - c.x) / c.w
        sig.append((side, round(t0, 12), round(t1, 12)))
    return (round(c.w, 14), round(c.h, 14), tuple(sig))


@dataclass
class SparseSystem:
    A: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    free: np.ndarray            # indices of unconstrained dofs
    fixed_values: np.ndarray    # full-length; Dirichlet data on constrained dofs

    def embed(self, x_free: np.ndarray) -> np.ndarray:
        full = self.fixed_values.copy()
        full[self.free] = x_free
        return full


class WgAssembler:
    """Holds the per-signature operator cache for one (mesh, problem, k)."""

    def __init__(self, mesh: Mesh, problem: ProblemData, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.mesh = mesh
        self.problem = problem
        self.k = k
        self.dofmap = build_dofmap(mesh, k)
        self.kappa = mesh.kappa
        self.b_inf = sup_b(mesh, problem, k)
        self._coef_const = problem.b_const is not None and problem.a_const is not None
        self._cache: dict = {}

    # ------------------------------------------------------------- locals
    def _facets(self, pos: int):
        return [(self.mesh.facets[fid], nrm)
                for fid, nrm in self.mesh.cell_facets[pos]]

    def sig_data(self, pos: int) -> dict:
        sig = cell_signature(self.mesh, pos)
        data = self._cache.get(sig)
        if data is None:
            data = {"sig": sig}
            self._cache[sig] = data
        return data

    def weak_ops(self, pos: int):
        """(G, D, M1, Mk) for the cell, cached by signature when possible."""
        data = self.sig_data(pos)
        cell = self.mesh.leaves[pos]
        facets = self._facets(pos)
        if "G" not in data:
            data["G"] = weak_gradient(cell, facets, self.k)
            data["M1"] = CellBasis(cell, self.k - 1).mass_matrix()
            data["Mk"] = CellBasis(cell, self.k).mass_matrix()
        if self.problem.b_const is not None:
            if "D" not in data:
                data["D"] = weak_divergence(cell, facets, self.k, self.problem.b)
            D = data["D"]
        else:
            D = weak_divergence(cell, facets, self.k, self.problem.b)
        return data["G"], D, data["M1"], data["Mk"]

    def jump_data(self, pos: int) -> list:
        """Per facet of the cell: (R, wq, tau_plus_vals, tau_vals) where
        R maps the local dof vector to pointwise values of v0 - vb at the
        facet quadrature points.  Cached by signature when b is constant."""
        data = self.sig_data(pos)
        if self.problem.b_const is not None and "jump" in data:
            return data["jump"]
        cell = self.mesh.leaves[pos]
        facets = self._facets(pos)
        k = self.k
        n0 = space_dim(k)
        nloc = n0 + (k + 1) * len(facets)
        bk = CellBasis(cell, k)
        order = 2 * k + (2 if self.problem.b_const is not None else OVER_INT)
        out = []
        off = n0
        for facet, nrm in facets:
            frule, t = facet_quadrature(order, facet)
            if self.problem.b_const is not None:
                bn = np.dot(self.problem.b_const, nrm)
            else:
                bn = np.asarray(self.problem.b(frule.points[:, 0],
                                               frule.points[:, 1])) @ np.asarray(nrm)
            ones = np.ones(len(frule.weights))
            tp = tau_plus(bn, cell.diameter, self.problem.eps, self.kappa,
                          self.b_inf) * ones
            tv = tau(bn, cell.diameter, self.problem.eps, self.kappa,
                     self.b_inf) * ones
            R = np.zeros((len(frule.weights), nloc))
            R[:, :n0] = bk.eval(frule.points)
            R[:, off:off + k + 1] = -FacetBasis(facet, k).eval_param(t)
            out.append((R, frule.weights, tp, tv))
            off += k + 1
        if self.problem.b_const is not None:
            data["jump"] = out
        return out

    def jump_sq(self, pos: int, vl: np.ndarray, which: str = "tau") -> float:
        """sum_E int_E w (v0 - vb)^2 with w = tau (or tau_plus), evaluated
        pointwise so that near-conforming functions do not lose accuracy."""
        total = 0.0
        sel = 2 if which == "tau_plus" else 3
        for item in self.jump_data(pos):
            r = item[0] @ vl
            total += float((r * r * item[1] * item[sel]).sum())
        return total

    def _jump_matrix(self, pos: int, weight_fn) -> np.ndarray:
        """Local quadratic form version of jump_sq, for assembly."""
        nloc = len(self.dofmap.cell_dofs(pos))
        S = np.zeros((nloc, nloc))
        sel = 2 if weight_fn is tau_plus else 3
        for item in self.jump_data(pos):
            R, wq = item[0], item[1]
            S += R.T @ (R * (item[sel] * wq)[:, None])
        return S

    def stab_matrix(self, pos: int) -> np.ndarray:
        data = self.sig_data(pos)
        if self._coef_const:
            if "S_plus" not in data:
                data["S_plus"] = self._jump_matrix(pos, tau_plus)
            return data["S_plus"]
        return self._jump_matrix(pos, tau_plus)

    def norm_jump_matrix(self, pos: int) -> np.ndarray:
        data = self.sig_data(pos)
        if self._coef_const:
            if "S_tau" not in data:
                data["S_tau"] = self._jump_matrix(pos, tau)
            return data["S_tau"]
        return self._jump_matrix(pos, tau)

    def local_matrix(self, pos: int) -> np.ndarray:
        """Dense local bilinear form over the cell's interior + facet dofs."""
        data = self.sig_data(pos)
        if self._coef_const and "A_loc" in data:
            return data["A_loc"]
        G, D, M1, Mk = self.weak_ops(pos)
        cell = self.mesh.leaves[pos]
        k = self.k
        n0 = space_dim(k)
        nloc = G.shape[2]
        A = np.zeros((nloc, nloc))
        # diffusion
        for c in range(2):
            A += self.problem.eps * G[c].T @ M1 @ G[c]
        # convection: (div_w(b w), v0)
        A[:n0, :] += Mk @ D
        # reaction: (a w0, v0)
        if self.problem.a_const is not None:
            if self.problem.a_const != 0.0:
                A[:n0, :n0] += self.problem.a_const * Mk
        else:
            rule = cell_quadrature(2 * k + OVER_INT, cell)
            V = CellBasis(cell, k).eval(rule.points)
            av = np.asarray(self.problem.a(rule.points[:, 0], rule.points[:, 1]))
            A[:n0, :n0] += V.T @ (V * (av * rule.weights)[:, None])
        # stabilization
        A += self.stab_matrix(pos)
        if self._coef_const:
            data["A_loc"] = A
        return A

    # ------------------------------------------------------------- global
    def assemble(self) -> SparseSystem:
        dm = self.dofmap
        self.problem.validate(self.mesh, self.k)
        rows, cols, vals = [], [], []
        rhs = np.zeros(dm.ndofs)
        k = self.k
        n0 = dm.n0

        # group cells by (w, h) for vectorized rhs quadrature
        groups: dict = {}
        for pos in range(self.mesh.num_leaves):
            c = self.mesh.leaves[pos]
            groups.setdefault((round(c.w, 14), round(c.h, 14)), []).append(pos)

        for (w, h), members in groups.items():
            ref = self.mesh.leaves[members[0]]
            rule = cell_quadrature(2 * k + OVER_INT, ref)
            V = CellBasis(ref, k).eval(rule.points)          # same for all in group
            offs = rule.points - np.array([ref.x, ref.y])    # (q, 2)
            origins = np.array([[self.mesh.leaves[p].x, self.mesh.leaves[p].y]
                                for p in members])
            pts = origins[:, None, :] + offs[None, :, :]
            fv = np.asarray(self.problem.f(pts[..., 0].ravel(),
                                           pts[..., 1].ravel())).reshape(len(members), -1)
            blocks = (fv * rule.weights[None, :]) @ V        # (ncells, n0)
            for i, pos in enumerate(members):
                rhs[dm.cell_slice(pos)] = blocks[i]

        for pos in range(self.mesh.num_leaves):
            A = self.local_matrix(pos)
            idx = dm.cell_dofs(pos)
            n = len(idx)
            rows.append(np.repeat(idx, n))
            cols.append(np.tile(idx, n))
            vals.append(A.ravel())

        A_full = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dm.ndofs, dm.ndofs)).tocsr()

        g_vals = apply_dirichlet(dm, self.problem.g)
        free = np.flatnonzero(~dm.constrained)
        fixed = np.flatnonzero(dm.constrained)
        A_ff = A_full[free][:, free]
        b_red = rhs[free] - A_full[free][:, fixed] @ g_vals[fixed]
        return SparseSystem(A_ff.tocsr(), b_red, dm, free, g_vals)

    def bilinear(self, u: WgFunction, v: WgFunction) -> float:
        """a_h(u, v) by summing local quadratic forms (no global matrix)."""
        total = 0.0
        for pos in range(self.mesh.num_leaves):
            A = self.local_matrix(pos)
            total += v.local(pos) @ A @ u.local(pos)
        return float(total)

    def energy_norm(self, v: WgFunction) -> float:
        """|||v||| = sqrt(eps ||grad_w v||^2 + ||v0||^2 + jump term)."""
        total = 0.0
        for pos in range(self.mesh.num_leaves):
            G, _, M1, Mk = self.weak_ops(pos)
            vl = v.local(pos)
            v0 = vl[:self.dofmap.n0]
            gv = np.tensordot(G, vl, axes=([2], [0]))
            total += self.problem.eps * sum(gv[c] @ M1 @ gv[c] for c in range(2))
            total += v0 @ Mk @ v0
            total += self.jump_sq(pos, vl, "tau")
        return float(np.sqrt(max(total, 0.0)))


# --------------------------------------------------------- free functions
def assemble(mesh: Mesh, problem: ProblemData, k: int) -> SparseSystem:
    return WgAssembler(mesh, problem, k).assemble()


def bilinear_apply(u: WgFunction, v: WgFunction, mesh: Mesh,
                   problem: ProblemData, k: int) -> float:
    return WgAssembler(mesh, problem, k).bilinear(u, v)


def energy_norm(v: WgFunction, mesh: Mesh, problem: ProblemData, k: int) -> float:
    return WgAssembler(mesh, problem, k).energy_norm(v)
