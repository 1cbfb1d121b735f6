"""Scaled monomial bases on cells and facets, Gauss quadrature, L2 projection.

Cell bases are monomials in ((x - xc)/hx, (y - yc)/hy) with hx, hy the cell
half-widths; facet bases are 1D monomials in the arc-length parameter mapped
to [-1, 1].  Scaling keeps local mass matrices well conditioned up to k ~ 4.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import Cell, Facet

#: quadrature order added on top of 2k for terms with non-polynomial data
OVER_INT = 4


def space_dim(k: int) -> int:
    return (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> tuple[tuple[int, int], ...]:
    return tuple((d - j, j) for d in range(k + 1) for j in range(d + 1))


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray    # (n, 2) physical points (or (n,) for 1D params)
    weights: np.ndarray   # (n,)


@lru_cache(maxsize=None)
def _gauss_1d(order: int) -> tuple[np.ndarray, np.ndarray]:
    npts = order // 2 + 1
    return np.polynomial.legendre.leggauss(npts)


def cell_quadrature(order: int, cell: Cell) -> QuadRule:
    """Tensor Gauss-Legendre rule on the cell, exact for Q_order."""
    x, w = _gauss_1d(max(order, 1))
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([
        cell.x + (X.ravel() + 1) * cell.w / 2,
        cell.y + (Y.ravel() + 1) * cell.h / 2,
    ])
    wts = np.outer(w, w).ravel() * (cell.w * cell.h / 4)
    return QuadRule(pts, wts)


def facet_quadrature(order: int, facet: Facet) -> tuple[QuadRule, np.ndarray]:
    """1D Gauss rule along the facet.

    Returns (rule with 2D physical points, reference params in [-1, 1]).
    """
    t, w = _gauss_1d(max(order, 1))
    p0 = np.asarray(facet.p0)
    p1 = np.asarray(facet.p1)
    mid = (p0 + p1) / 2
    half = (p1 - p0) / 2
    pts = mid[None, :] + t[:, None] * half[None, :]
    return QuadRule(pts, w * facet.length / 2), t


class CellBasis:
    """P_k basis of scaled monomials on a physical cell."""

    def __init__(self, cell: Cell, k: int):
        self.cell = cell
        self.k = k
        self.dim = space_dim(k)
        self._exps = monomial_exponents(k)
        self._xc = cell.x + cell.w / 2
        self._yc = cell.y + cell.h / 2
        self._hx = cell.w / 2
        self._hy = cell.h / 2

    def _ref(self, pts: np.ndarray):
        pts = np.atleast_2d(pts)
        return (pts[:, 0] - self._xc) / self._hx, (pts[:, 1] - self._yc) / self._hy

    def eval(self, pts: np.ndarray) -> np.ndarray:
        X, Y = self._ref(pts)
        return np.column_stack([X ** i * Y ** j for i, j in self._exps])

    def grad(self, pts: np.ndarray) -> np.ndarray:
        """(npts, dim, 2) array of physical gradients."""
        X, Y = self._ref(pts)
        out = np.empty((len(X), self.dim, 2))
        for m, (i, j) in enumerate(self._exps):
            out[:, m, 0] = (i * X ** (i - 1) * Y ** j / self._hx) if i else 0.0
            out[:, m, 1] = (j * X ** i * Y ** (j - 1) / self._hy) if j else 0.0
        return out

    def mass_matrix(self) -> np.ndarray:
        rule = cell_quadrature(2 * self.k, self.cell)
        V = self.eval(rule.points)
        return V.T @ (V * rule.weights[:, None])


class FacetBasis:
    """P_k basis of scaled 1D monomials in the facet arc-length parameter."""

    def __init__(self, facet: Facet, k: int):
        self.facet = facet
        self.k = k
        self.dim = k + 1

    def eval_param(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(t)
        return np.column_stack([t ** m for m in range(self.dim)])

    def eval(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        p0 = np.asarray(self.facet.p0)
        p1 = np.asarray(self.facet.p1)
        half = (p1 - p0) / 2
        mid = (p0 + p1) / 2
        t = (pts - mid[None, :]) @ half / (half @ half)
        return self.eval_param(t)

    def mass_matrix(self) -> np.ndarray:
        rule, t = facet_quadrature(2 * self.k, self.facet)
        V = self.eval_param(t)
        return V.T @ (V * rule.weights[:, None])


def l2_project_cell(f, cell: Cell, k: int, order: int | None = None) -> np.ndarray:
    """Coefficients of the L2(T) projection of ``f`` onto P_k(T)."""
    basis = CellBasis(cell, k)
    if order is None:
        order = 2 * k + OVER_INT
    rule = cell_quadrature(order, cell)
    V = basis.eval(rule.points)
    fv = np.asarray(f(rule.points[:, 0], rule.points[:, 1]), dtype=float)
    rhs = V.T @ (rule.weights * fv)
    M = basis.mass_matrix()
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:   # pragma: no cover
        raise RuntimeError(f"singular local mass matrix on cell {cell.id}") from exc


def l2_project_facet(g, facet: Facet, k: int, order: int | None = None) -> np.ndarray:
    """Coefficients of the L2(E) projection of ``g`` onto P_k(E)."""
    basis = FacetBasis(facet, k)
    if order is None:
        order = 2 * k + OVER_INT
    rule, t = facet_quadrature(order, facet)
    V = basis.eval_param(t)
    gv = np.asarray(g(rule.points[:, 0], rule.points[:, 1]), dtype=float)
    rhs = V.T @ (rule.weights * gv)
    return np.linalg.solve(basis.mass_matrix(), rhs)
