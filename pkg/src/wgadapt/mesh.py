"""Quadtree meshes of axis-aligned rectangles with one-irregular hanging nodes.

Cells live in a quadtree over an ``n x n`` root grid.  Refinement is
isotropic 1->4; a closure sweep keeps the mesh one-irregular (leaf cells
sharing any part of an edge differ by at most one level).  Facets are
stored at the finest subdivision of every mesh edge, so a coarse cell
bordered by finer neighbors iterates over the neighbors' sub-facets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Cell:
    """One quadtree cell.  (cx, cy) index the cell at its own level, where
    level l has an (n*2^l) x (n*2^l) virtual grid over the domain."""

    id: int
    cx: int
    cy: int
    level: int
    x: float
    y: float
    w: float
    h: float
    parent: int | None = None
    children: tuple[int, int, int, int] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def diameter(self) -> float:
        return math.hypot(self.w, self.h)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + 0.5 * self.w, self.y + 0.5 * self.h)


@dataclass(frozen=True)
class Facet:
    """Axis-aligned mesh facet at the finest subdivision.

    ``owners`` holds (lower-id cell, higher-id cell) for interior facets and
    a single cell id for boundary facets.  ``normal`` points from the first
    owner to the second (outward for boundary facets).
    """

    id: int
    p0: tuple[float, float]
    p1: tuple[float, float]
    length: float
    boundary: bool
    owners: tuple[int, ...]
    normal: tuple[float, float]


class Mesh:
    """Immutable quadtree mesh.  Use :func:`uniform_grid` / :func:`refine`."""

    def __init__(self, domain: tuple[float, float, float, float], n: int,
                 cells: list[Cell]):
        self.domain = domain
        self.n = n
        self.cells = cells
        self.leaves: list[Cell] = [c for c in cells if c.is_leaf]
        self.leaf_index = {c.id: i for i, c in enumerate(self.leaves)}
        self.facets: list[Facet] = []
        # per leaf (by leaf position): list of (facet_id, outward normal)
        self.cell_facets: list[list[tuple[int, tuple[float, float]]]] = []
        self._build_facets()
        self.kappa = self._compute_kappa()

    # ---------------------------------------------------------------- facets
    def _build_facets(self) -> None:
        x0, y0, W, H = self.domain
        lmax = max(c.level for c in self.leaves)
        U = self.n * (1 << lmax)   # integer units per axis

        # integer rectangle per leaf
        rects = []
        for c in self.leaves:
            s = 1 << (lmax - c.level)
            rects.append((c.cx * s, c.cy * s, s))

        vlines: dict[int, tuple[list, list]] = {}   # u -> (left owners, right owners)
        hlines: dict[int, tuple[list, list]] = {}
        for i, (ux, uy, s) in enumerate(rects):
            vlines.setdefault(ux + s, ([], []))[0].append((uy, uy + s, i))
            vlines.setdefault(ux, ([], []))[1].append((uy, uy + s, i))
            hlines.setdefault(uy + s, ([], []))[0].append((ux, ux + s, i))
            hlines.setdefault(uy, ([], []))[1].append((ux, ux + s, i))

        facets: list[Facet] = []
        leaf_facets: list[list] = [[] for _ in self.leaves]

        def emit(vertical: bool, u: int, lines: tuple[list, list]) -> None:
            below, above = lines     # below: owner on the -normal side
            pts = sorted({p for iv in below for p in iv[:2]}
                         | {p for iv in above for p in iv[:2]})
            below_s = sorted(below)
            above_s = sorted(above)
            ib = ia = 0

            def owner_of(intervals, idx, a, b):
                # intervals disjoint and sorted; segments arrive in ascending order
                while idx < len(intervals) and intervals[idx][1] <= a:
                    idx += 1
                if idx < len(intervals):
                    t0, t1, i = intervals[idx]
                    if t0 <= a and b <= t1:
                        return i, idx
                return None, idx

            for a, b in zip(pts[:-1], pts[1:]):
                lo, ib = owner_of(below_s, ib, a, b)
                hi, ia = owner_of(above_s, ia, a, b)
                if lo is None and hi is None:
                    continue
                if vertical:
                    p0 = (x0 + u / U * W, y0 + a / U * H)
                    p1 = (x0 + u / U * W, y0 + b / U * H)
                    geo_n = (1.0, 0.0)       # from the left owner to the right
                    length = (b - a) / U * H
                else:
                    p0 = (x0 + a / U * W, y0 + u / U * H)
                    p1 = (x0 + b / U * W, y0 + u / U * H)
                    geo_n = (0.0, 1.0)
                    length = (b - a) / U * W
                fid = len(facets)
                if lo is None or hi is None:
                    cid = self.leaves[lo if lo is not None else hi].id
                    out = geo_n if hi is None else (-geo_n[0], -geo_n[1])
                    facets.append(Facet(fid, p0, p1, length, True, (cid,), out))
                    leaf_facets[lo if lo is not None else hi].append(
                        (fid, out))
                else:
                    c_lo, c_hi = self.leaves[lo].id, self.leaves[hi].id
                    if c_lo < c_hi:
                        owners, nrm = (c_lo, c_hi), geo_n
                    else:
                        owners, nrm = (c_hi, c_lo), (-geo_n[0], -geo_n[1])
                    facets.append(Facet(fid, p0, p1, length, False, owners, nrm))
                    leaf_facets[lo].append((fid, geo_n))
                    leaf_facets[hi].append((fid, (-geo_n[0], -geo_n[1])))

        for u in sorted(vlines):
            emit(True, u, vlines[u])
        for u in sorted(hlines):
            emit(False, u, hlines[u])

        self.facets = facets
        # canonical per-cell ordering: left, right, bottom, top; ascending
        for i, lst in enumerate(leaf_facets):
            def key(item):
                fid, nrm = item
                f = self.facets[fid]
                side = {(-1.0, 0.0): 0, (1.0, 0.0): 1,
                        (0.0, -1.0): 2, (0.0, 1.0): 3}[nrm]
                return (side, f.p0[1], f.p0[0])
            lst.sort(key=key)
        self.cell_facets = leaf_facets

    def _compute_kappa(self) -> float:
        kappa = 0.0
        for pos, cell in enumerate(self.leaves):
            hmin = min(self.facets[fid].length
                       for fid, _ in self.cell_facets[pos])
            kappa = max(kappa, cell.diameter / hmin)
        return kappa

    # --------------------------------------------------------------- queries
    @property
    def num_leaves(self) -> int:
        return len(self.leaves)

    def interior_facets(self) -> list[Facet]:
        return [f for f in self.facets if not f.boundary]

    def boundary_facets(self) -> list[Facet]:
        return [f for f in self.facets if f.boundary]

    def facet_sides(self, facet_id: int):
        """Return (owner+, owner-, normal) with the normal pointing from
        owner+ to owner-; boundary facets return (owner, None, outward)."""
        f = self.facets[facet_id]
        if f.boundary:
            return f.owners[0], None, f.normal
        return f.owners[0], f.owners[1], f.normal

    def cell_by_id(self, cid: int) -> Cell:
        return self.cells[cid]

    def leaf_area(self) -> float:
        return sum(c.w * c.h for c in self.leaves)

    def save_text(self, path: str) -> None:
        with open(path, "w") as fh:
            for c in self.leaves:
                fh.write(f"{c.id} {c.level} {c.x!r} {c.y!r} {c.w!r} {c.h!r}\n")

    def same_leaves(self, other: "Mesh") -> bool:
        a = {(c.cx, c.cy, c.level) for c in self.leaves}
        b = {(c.cx, c.cy, c.level) for c in other.leaves}
        return a == b


def uniform_grid(n: int, domain: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)) -> Mesh:
    """n x n congruent cells over ``domain`` = (x0, y0, width, height)."""
    if n < 1:
        raise MeshError(f"grid size must be >= 1, got {n}")
    x0, y0, W, H = domain
    if W <= 0 or H <= 0:
        raise MeshError("domain must have positive width and height")
    cells = []
    for j in range(n):
        for i in range(n):
            cells.append(Cell(id=len(cells), cx=i, cy=j, level=0,
                              x=x0 + i * W / n, y=y0 + j * H / n,
                              w=W / n, h=H / n))
    return Mesh(domain, n, cells)


def _adjacent_pairs(keys: Sequence[tuple[int, int, int]], n: int):
    """Pairs (i, j) of leaves sharing a positive-length edge segment."""
    lmax = max(k[2] for k in keys)
    vlines: dict[int, tuple[list, list]] = {}
    hlines: dict[int, tuple[list, list]] = {}
    for i, (cx, cy, lev) in enumerate(keys):
        s = 1 << (lmax - lev)
        ux, uy = cx * s, cy * s
        vlines.setdefault(ux + s, ([], []))[0].append((uy, uy + s, i))
        vlines.setdefault(ux, ([], []))[1].append((uy, uy + s, i))
        hlines.setdefault(uy + s, ([], []))[0].append((ux, ux + s, i))
        hlines.setdefault(uy, ([], []))[1].append((ux, ux + s, i))
    pairs = []
    for lines in (vlines, hlines):
        for lo, hi in lines.values():
            if not lo or not hi:
                continue
            lo.sort()
            hi.sort()
            ia = 0
            for (a0, a1, i) in lo:
                while ia < len(hi) and hi[ia][1] <= a0:
                    ia += 1
                ja = ia
                while ja < len(hi) and hi[ja][0] < a1:
                    pairs.append((i, hi[ja][2]))
                    ja += 1
    return pairs


def refine(mesh: Mesh, marked: Iterable[int]) -> Mesh:
    """Refine ``marked`` leaf cells 1->4 and close to a one-irregular mesh.

    Returns a new mesh; ``mesh`` is unchanged.  Cell ids of surviving cells
    are preserved; children get fresh ids in deterministic order.
    """
    marked = sorted(set(marked))
    for cid in marked:
        if cid < 0 or cid >= len(mesh.cells):
            raise MeshError(f"unknown cell id {cid}")
        if not mesh.cells[cid].is_leaf:
            raise MeshError(f"cell {cid} is not a leaf")

    cells = list(mesh.cells)

    def split(cid: int) -> None:
        c = cells[cid]
        kids = []
        for dy in (0, 1):
            for dx in (0, 1):
                kid = Cell(id=len(cells) + len(kids),
                           cx=2 * c.cx + dx, cy=2 * c.cy + dy,
                           level=c.level + 1,
                           x=c.x + dx * c.w / 2, y=c.y + dy * c.h / 2,
                           w=c.w / 2, h=c.h / 2, parent=cid)
                kids.append(kid)
        cells.extend(kids)
        cells[cid] = Cell(id=c.id, cx=c.cx, cy=c.cy, level=c.level,
                          x=c.x, y=c.y, w=c.w, h=c.h, parent=c.parent,
                          children=tuple(k.id for k in kids))

    for cid in marked:
        split(cid)

    # closure: refine any leaf with a neighbor >= 2 levels finer
    while True:
        leaves = [c for c in cells if c.is_leaf]
        keys = [(c.cx, c.cy, c.level) for c in leaves]
        bad: set[int] = set()
        for i, j in _adjacent_pairs(keys, mesh.n):
            if leaves[j].level - leaves[i].level >= 2:
                bad.add(leaves[i].id)
            elif leaves[i].level - leaves[j].level >= 2:
                bad.add(leaves[j].id)
        if not bad:
            break
        for cid in sorted(bad):
            split(cid)

    return Mesh(mesh.domain, mesh.n, cells)


def check_one_irregular(mesh: Mesh) -> bool:
    lvl = {c.id: c.level for c in mesh.cells}
    return all(abs(lvl[f.owners[0]] - lvl[f.owners[1]]) <= 1
               for f in mesh.facets if not f.boundary)
