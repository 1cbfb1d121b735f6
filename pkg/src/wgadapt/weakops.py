"""Per-cell weak gradient and weak divergence as matrices on local WG dofs.

Local dof layout on a cell: the (k+1)(k+2)/2 interior coefficients first,
then k+1 coefficients per facet of the cell boundary, facets in the mesh's
canonical order.  Cells bordered by finer neighbors see more facets, so the
local dof count varies per cell.
"""
from __future__ import annotations

import numpy as np

from .mesh import Facet, Cell
from .poly import (OVER_INT, CellBasis, FacetBasis, cell_quadrature,
                   facet_quadrature, space_dim)

FacetList = list[tuple[Facet, tuple[float, float]]]


class UnsupportedDegreeError(ValueError):
    pass


def local_dof_count(k: int, n_facets: int) -> int:
    return space_dim(k) + (k + 1) * n_facets


def weak_gradient(cell: Cell, facets: FacetList, k: int) -> np.ndarray:
    """Matrix G with shape (2, dim P_{k-1}, nloc) mapping local WG dofs to
    the coefficients of the discrete weak gradient in P_{k-1}(T)^2.

    Defined by (G v, psi)_T = -(v0, div psi)_T + <vb, psi.n>_dT for all
    psi in P_{k-1}(T)^2.
    """
    if k < 1:
        raise UnsupportedDegreeError("weak gradient needs k >= 1")
    bk = CellBasis(cell, k)
    b1 = CellBasis(cell, k - 1)
    n0 = bk.dim
    nloc = local_dof_count(k, len(facets))
    B = np.zeros((2, b1.dim, nloc))

    rule = cell_quadrature(2 * k, cell)
    V0 = bk.eval(rule.points)                   # (q, n0)
    G1 = b1.grad(rule.points)                   # (q, dim1, 2)
    for c in range(2):
        B[c, :, :n0] = -(G1[:, :, c] * rule.weights[:, None]).T @ V0

    off = n0
    for facet, nrm in facets:
        frule, t = facet_quadrature(2 * k, facet)
        Vc = b1.eval(frule.points)                           # (q, dim1)
        Vf = FacetBasis(facet, k).eval_param(t)              # (q, k+1)
        W = (Vc * frule.weights[:, None]).T @ Vf             # (dim1, k+1)
        for c in range(2):
            B[c, :, off:off + k + 1] += nrm[c] * W
        off += k + 1

    M1 = b1.mass_matrix()
    G = np.empty_like(B)
    for c in range(2):
        G[c] = np.linalg.solve(M1, B[c])
    return G


def weak_divergence(cell: Cell, facets: FacetList, k: int, b) -> np.ndarray:
    """Matrix D with shape (dim P_k, nloc): coefficients of the discrete
    weak divergence of the convective flux b*v in P_k(T).

    Defined by (D v, psi)_T = -(b v0, grad psi)_T + <(b.n) vb, psi>_dT.
    """
    if k < 1:
        raise UnsupportedDegreeError("weak divergence needs k >= 1")
    bk = CellBasis(cell, k)
    n0 = bk.dim
    nloc = local_dof_count(k, len(facets))
    B = np.zeros((bk.dim, nloc))

    rule = cell_quadrature(2 * k + OVER_INT, cell)
    V0 = bk.eval(rule.points)
    Gk = bk.grad(rule.points)                                # (q, n0, 2)
    bv = np.asarray(b(rule.points[:, 0], rule.points[:, 1]))  # (q, 2)
    bdotgrad = Gk[:, :, 0] * bv[:, 0:1] + Gk[:, :, 1] * bv[:, 1:2]
    B[:, :n0] = -(bdotgrad * rule.weights[:, None]).T @ V0

    off = n0
    for facet, nrm in facets:
        frule, t = facet_quadrature(2 * k + OVER_INT, facet)
        bn = np.asarray(b(frule.points[:, 0], frule.points[:, 1])) @ np.asarray(nrm)
        Vc = bk.eval(frule.points)
        Vf = FacetBasis(facet, k).eval_param(t)
        B[:, off:off + k + 1] += (Vc * (bn * frule.weights)[:, None]).T @ Vf
        off += k + 1

    return np.linalg.solve(bk.mass_matrix(), B)


def embed_polynomial(cell: Cell, facets: FacetList, k: int, coeffs: np.ndarray) -> np.ndarray:
    """Local WG vector for {p, trace p} where p = sum coeffs * cell basis."""
    from .poly import l2_project_facet
    bk = CellBasis(cell, k)
    parts = [np.asarray(coeffs, dtype=float)]
    for facet, _ in facets:
        f = lambda x, y: bk.eval(np.column_stack([x, y])) @ coeffs
        parts.append(l2_project_facet(f, facet, k, order=2 * k + 2))
    return np.concatenate(parts)
