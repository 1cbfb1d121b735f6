"""Global numbering of WG unknowns and the discrete solution container.

Interior dofs come first, one P_k block per leaf cell, followed by one
P_k(E) block per facet.  Facet blocks are shared by the owning cells, which
is what makes u_hb single-valued per facet.
"""
from __future__ import annotations

import numpy as np

from .mesh import Mesh
from .poly import CellBasis, FacetBasis, l2_project_facet, space_dim


class DofMap:
    def __init__(self, mesh: Mesh, k: int):
        if k < 1:
            raise ValueError("WG spaces here require k >= 1")
        self.mesh = mesh
        self.k = k
        self.n0 = space_dim(k)
        self.nf = k + 1
        self.n_cell_dofs = mesh.num_leaves * self.n0
        self.ndofs = self.n_cell_dofs + len(mesh.facets) * self.nf
        self.constrained = np.zeros(self.ndofs, dtype=bool)
        for f in mesh.boundary_facets():
            self.constrained[self.facet_slice(f.id)] = True
        self._cell_dofs = [self._build_cell_dofs(p) for p in range(mesh.num_leaves)]

    def cell_slice(self, pos: int) -> slice:
        return slice(pos * self.n0, (pos + 1) * self.n0)

    def facet_slice(self, fid: int) -> slice:
        a = self.n_cell_dofs + fid * self.nf
        return slice(a, a + self.nf)

    def _build_cell_dofs(self, pos: int) -> np.ndarray:
        idx = list(range(pos * self.n0, (pos + 1) * self.n0))
        for fid, _ in self.mesh.cell_facets[pos]:
            s = self.facet_slice(fid)
            idx.extend(range(s.start, s.stop))
        return np.asarray(idx, dtype=np.int64)

    def cell_dofs(self, pos: int) -> np.ndarray:
        """Global dof indices in the cell's local layout (interior, facets)."""
        return self._cell_dofs[pos]


def build_dofmap(mesh: Mesh, k: int) -> DofMap:
    return DofMap(mesh, k)


def apply_dirichlet(dofmap: DofMap, g) -> np.ndarray:
    """Full-length vector with the L2 facet projection of g on constrained
    dofs (zero elsewhere)."""
    vals = np.zeros(dofmap.ndofs)
    for f in dofmap.mesh.boundary_facets():
        vals[dofmap.facet_slice(f.id)] = l2_project_facet(g, f, dofmap.k)
    return vals


class WgFunction:
    """A WG function {v0, vb}: coefficient vector over a DofMap."""

    def __init__(self, dofmap: DofMap, coeffs: np.ndarray | None = None):
        self.dofmap = dofmap
        self.mesh = dofmap.mesh
        self.k = dofmap.k
        self.coeffs = np.zeros(dofmap.ndofs) if coeffs is None else np.asarray(coeffs, dtype=float)
        assert self.coeffs.shape == (dofmap.ndofs,)

    def local(self, pos: int) -> np.ndarray:
        return self.coeffs[self.dofmap.cell_dofs(pos)]

    def interior_coeffs(self, pos: int) -> np.ndarray:
        return self.coeffs[self.dofmap.cell_slice(pos)]

    def facet_coeffs(self, fid: int) -> np.ndarray:
        return self.coeffs[self.dofmap.facet_slice(fid)]

    def cell_values(self, pos: int, pts: np.ndarray) -> np.ndarray:
        """v0 evaluated at physical points inside leaf ``pos``."""
        basis = CellBasis(self.mesh.leaves[pos], self.k)
        return basis.eval(pts) @ self.interior_coeffs(pos)

    def facet_values(self, fid: int, t: np.ndarray) -> np.ndarray:
        """vb at reference parameters t in [-1, 1] along facet ``fid``."""
        return FacetBasis(self.mesh.facets[fid], self.k).eval_param(t) @ \
            self.facet_coeffs(fid)

    def save_text(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(f"k {self.k}\n")
            for pos, cell in enumerate(self.mesh.leaves):
                vals = " ".join(repr(float(v)) for v in self.interior_coeffs(pos))
                fh.write(f"cell {cell.id} {vals}\n")
            for f in self.mesh.facets:
                vals = " ".join(repr(float(v)) for v in self.facet_coeffs(f.id))
                fh.write(f"facet {f.id} {vals}\n")

    @classmethod
    def load_text(cls, path: str, dofmap: DofMap) -> "WgFunction":
        fn = cls(dofmap)
        leaf_pos = {c.id: p for p, c in enumerate(dofmap.mesh.leaves)}
        with open(path) as fh:
            header = fh.readline().split()
            if header[:1] != ["k"] or int(header[1]) != dofmap.k:
                raise ValueError("degree mismatch in coefficient dump")
            for line in fh:
                kind, ident, *vals = line.split()
                vals = np.array([float(v) for v in vals])
                if kind == "cell":
                    fn.coeffs[dofmap.cell_slice(leaf_pos[int(ident)])] = vals
                else:
                    fn.coeffs[dofmap.facet_slice(int(ident))] = vals
        return fn
