"""Robust residual a posteriori estimator for the WG solution.

Per cell: eta_T1 = alpha_T ||R_h||_T with the polynomial residual
R_h = f_h + div(eps grad_w u_h) - div_w(b u_h) - a_h u_h0, and
eta_T2^2 = <tau (u_h0 - u_hb), u_h0 - u_hb>_dT.  Per interior facet:
eta_E^2 = alpha_E eps^{-1/2} ||[eps n . grad_w u_h]||_E^2 (the printed,
unsquared weight; ``edge_weight_mode="squared"`` switches to
alpha_E^2 eps^{-1} for sensitivity studies).  Weights alpha follow the
convection-robust min{h eps^{-1/2}, c0^{-1/2}} rule, with 1 replacing
c0^{-1/2} when c0 = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import ProblemData, WgAssembler
from .dofmap import WgFunction
from .mesh import Mesh
from .poly import (OVER_INT, CellBasis, cell_quadrature, facet_quadrature,
                   l2_project_cell)


def weights(h: float, eps: float, c0: float) -> float:
    """alpha = min{h eps^{-1/2}, c0^{-1/2}}, with 1 in place of c0^{-1/2}
    when c0 = 0."""
    cap = 1.0 if c0 == 0.0 else c0 ** -0.5
    return min(h * eps ** -0.5, cap)


@dataclass
class EstimatorReport:
    cell_ids: np.ndarray
    eta_T1: np.ndarray
    eta_T2: np.ndarray
    osc_T: np.ndarray
    alpha_T: np.ndarray
    facet_ids: np.ndarray
    eta_E: np.ndarray          # zero on boundary facets
    alpha_E: np.ndarray

    @property
    def eta_h(self) -> float:
        return float(np.sqrt((self.eta_T1 ** 2).sum() + (self.eta_T2 ** 2).sum()
                             + (self.eta_E ** 2).sum()))

    @property
    def osc(self) -> float:
        return float(np.sqrt((self.osc_T ** 2).sum()))

    def cell_indicators(self, mesh: Mesh) -> np.ndarray:
        """Marking indicator per leaf: cell terms plus half of each owned
        interior facet term."""
        ind = self.eta_T1 ** 2 + self.eta_T2 ** 2
        pos_of = mesh.leaf_index
        for f in mesh.facets:
            if f.boundary:
                continue
            share = 0.5 * self.eta_E[f.id] ** 2
            ind[pos_of[f.owners[0]]] += share
            ind[pos_of[f.owners[1]]] += share
        return ind

    def save_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("cell_id,eta_T1,eta_T2,osc,alpha_T\n")
            for i, cid in enumerate(self.cell_ids):
                fh.write(f"{cid},{float(self.eta_T1[i])!r},{float(self.eta_T2[i])!r},"
                         f"{float(self.osc_T[i])!r},{float(self.alpha_T[i])!r}\n")
            fh.write("facet_id,eta_E,alpha_E\n")
            for i, fid in enumerate(self.facet_ids):
                fh.write(f"{fid},{float(self.eta_E[i])!r},{float(self.alpha_E[i])!r}\n")


class Estimator:
    def __init__(self, mesh: Mesh, u_h: WgFunction, problem: ProblemData,
                 k: int, assembler: WgAssembler | None = None,
                 edge_weight_mode: str = "literal"):
        if edge_weight_mode not in ("literal", "squared"):
            raise ValueError(f"unknown edge_weight_mode {edge_weight_mode!r}")
        self.mesh = mesh
        self.u_h = u_h
        self.problem = problem
        self.k = k
        self.asm = assembler or WgAssembler(mesh, problem, k)
        self.edge_weight_mode = edge_weight_mode
        self._grad_coeffs: np.ndarray | None = None

    # -------------------------------------------------------- cell pieces
    def _est_rule_data(self, pos: int):
        """Cached per-signature basis/gradient tables at the residual rule."""
        data = self.asm.sig_data(pos)
        if "est" not in data:
            cell = self.mesh.leaves[pos]
            order = max(4 * self.k, 2 * self.k + OVER_INT)
            rule = cell_quadrature(order, cell)
            bk = CellBasis(cell, self.k)
            b1 = CellBasis(cell, self.k - 1)
            g1 = b1.grad(rule.points)
            data["est"] = {
                "wq": rule.weights,
                "Vk": bk.eval(rule.points),
                "ddx": g1[:, :, 0],
                "ddy": g1[:, :, 1],
            }
        return data["est"]

    def grad_coeffs(self, pos: int) -> np.ndarray:
        """Weak-gradient coefficients (2, dim P_{k-1}) of u_h on the cell."""
        G, _, _, _ = self.asm.weak_ops(pos)
        return np.tensordot(G, self.u_h.local(pos), axes=([2], [0]))

    def cell_residual(self, pos: int) -> float:
        """eta_T1 = alpha_T ||R_h||_T."""
        cell = self.mesh.leaves[pos]
        est = self._est_rule_data(pos)
        fh = l2_project_cell(self.problem.f, cell, self.k)
        R = est["Vk"] @ fh
        gc = self.grad_coeffs(pos)
        R += self.problem.eps * (est["ddx"] @ gc[0] + est["ddy"] @ gc[1])
        _, D, _, _ = self.asm.weak_ops(pos)
        R -= est["Vk"] @ (D @ self.u_h.local(pos))
        u0 = est["Vk"] @ self.u_h.interior_coeffs(pos)
        if self.problem.a_const is not None:
            if self.problem.a_const != 0.0:
                R -= self.problem.a_const * u0
        else:
            ah = l2_project_cell(self.problem.a, cell, self.k)
            R -= (est["Vk"] @ ah) * u0
        aT = weights(cell.diameter, self.problem.eps, self.problem.c0)
        return aT * math.sqrt(float((est["wq"] * R * R).sum()))

    def stab_indicator(self, pos: int) -> float:
        """eta_T2 from the tau-weighted interior/facet mismatch."""
        return math.sqrt(self.asm.jump_sq(pos, self.u_h.local(pos), "tau"))

    def oscillation(self, pos: int) -> float:
        """alpha_T sqrt(||f - f_h||^2 + ||(a - a_h) u_h0||^2)."""
        cell = self.mesh.leaves[pos]
        rule = cell_quadrature(2 * self.k + 2 * OVER_INT, cell)
        bk = CellBasis(cell, self.k)
        V = bk.eval(rule.points)
        fh = l2_project_cell(self.problem.f, cell, self.k)
        fv = np.asarray(self.problem.f(rule.points[:, 0], rule.points[:, 1]))
        total = float((rule.weights * (fv - V @ fh) ** 2).sum())
        if self.problem.a_const is None:
            ah = l2_project_cell(self.problem.a, cell, self.k)
            av = np.asarray(self.problem.a(rule.points[:, 0], rule.points[:, 1]))
            u0 = V @ self.u_h.interior_coeffs(pos)
            total += float((rule.weights * ((av - V @ ah) * u0) ** 2).sum())
        aT = weights(cell.diameter, self.problem.eps, self.problem.c0)
        return aT * math.sqrt(total)

    # -------------------------------------------------------- edge piece
    def edge_jump(self, fid: int) -> float:
        """eta_E; zero on boundary facets."""
        f = self.mesh.facets[fid]
        if f.boundary:
            return 0.0
        eps = self.problem.eps
        frule, _ = facet_quadrature(2 * self.k, f)
        nrm = np.asarray(f.normal)
        jump = np.zeros(len(frule.weights))
        for sign, cid in zip((1.0, -1.0), f.owners):
            pos = self.mesh.leaf_index[cid]
            b1 = CellBasis(self.mesh.leaves[pos], self.k - 1)
            gc = self.grad_coeffs(pos)
            V1 = b1.eval(frule.points)
            jump += sign * eps * (nrm[0] * (V1 @ gc[0]) + nrm[1] * (V1 @ gc[1]))
        sq = float((frule.weights * jump * jump).sum())
        aE = weights(f.length, eps, self.problem.c0)
        if self.edge_weight_mode == "literal":
            return math.sqrt(aE * eps ** -0.5 * sq)
        return math.sqrt(aE ** 2 * eps ** -1.0 * sq)

    # ------------------------------------------------------------ global
    def report(self) -> EstimatorReport:
        n = self.mesh.num_leaves
        eta1 = np.empty(n)
        eta2 = np.empty(n)
        oscT = np.empty(n)
        aT = np.empty(n)
        for pos, cell in enumerate(self.mesh.leaves):
            eta1[pos] = self.cell_residual(pos)
            eta2[pos] = self.stab_indicator(pos)
            oscT[pos] = self.oscillation(pos)
            aT[pos] = weights(cell.diameter, self.problem.eps, self.problem.c0)
        nf = len(self.mesh.facets)
        etaE = np.zeros(nf)
        aE = np.empty(nf)
        for f in self.mesh.facets:
            aE[f.id] = weights(f.length, self.problem.eps, self.problem.c0)
            if not f.boundary:
                etaE[f.id] = self.edge_jump(f.id)
        return EstimatorReport(
            cell_ids=np.array([c.id for c in self.mesh.leaves]),
            eta_T1=eta1, eta_T2=eta2, osc_T=oscT, alpha_T=aT,
            facet_ids=np.arange(nf), eta_E=etaE, alpha_E=aE)


def global_estimate(mesh: Mesh, u_h: WgFunction, problem: ProblemData, k: int,
                    assembler: WgAssembler | None = None,
                    edge_weight_mode: str = "literal") -> EstimatorReport:
    return Estimator(mesh, u_h, problem, k, assembler, edge_weight_mode).report()
