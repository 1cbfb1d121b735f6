"""Benchmark problems, exact-error norms and the star-norm surrogate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from .assembly import ProblemData, WgAssembler
from .dofmap import WgFunction
from .mesh import Mesh
from .poly import OVER_INT, CellBasis, cell_quadrature, space_dim, monomial_exponents


@dataclass
class Benchmark:
    problem: ProblemData
    exact: Callable | None = None
    exact_grad: Callable | None = None
    name: str = ""


def _safe_exp(z):
    """exp with exponents clamped below -700 (benign underflow to zero)."""
    return np.exp(np.maximum(z, -700.0))


def boundary_layer(eps: float) -> Benchmark:
    """Outflow boundary layers at x = 1 and y = 1 of width O(eps).

    u = x + y(1-x) + (e^{-1/eps} - e^{-(1-x)(1-y)/eps}) / (1 - e^{-1/eps})
    with b = (1, 1), a = 0, and f, g derived from the closed form.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    C = 1.0 / (1.0 - _safe_exp(np.array(-1.0 / eps)))
    e0 = float(_safe_exp(np.array(-1.0 / eps)))

    def layer(x, y):
        return _safe_exp(-(1.0 - np.asarray(x)) * (1.0 - np.asarray(y)) / eps)

    def u(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return x + y * (1.0 - x) + C * (e0 - layer(x, y))

    def grad_u(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        E = layer(x, y)
        ux = 1.0 - y - C * E * (1.0 - y) / eps
        uy = (1.0 - x) - C * E * (1.0 - x) / eps
        return np.stack([ux, uy], axis=-1)

    def f(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        E = layer(x, y)
        lap = -C * E * ((1.0 - x) ** 2 + (1.0 - y) ** 2) / eps ** 2
        conv = (1.0 - y) + (1.0 - x) - C * E * ((1.0 - y) + (1.0 - x)) / eps
        return -eps * lap + conv

    problem = ProblemData(
        eps=eps,
        b=lambda x, y: np.broadcast_to(
            np.array([1.0, 1.0]), (np.size(np.atleast_1d(x)), 2)),
        a=lambda x, y: np.zeros_like(np.atleast_1d(x), dtype=float),
        f=f, g=u, c0=0.0, b_const=(1.0, 1.0), a_const=0.0)
    return Benchmark(problem, u, grad_u, name="boundary_layer")


def internal_layer(eps: float) -> Benchmark:
    """Discontinuous inflow data: g = 1 on [0,1]x{0} and {0}x[0,1/5], else 0;
    b = (1/2, sqrt(3)/2), a = 0, f = 0.  No closed-form solution."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    s3 = math.sqrt(3.0) / 2.0

    def g(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        on_bottom = y <= 1e-14
        on_left_low = (x <= 1e-14) & (y <= 0.2)
        return np.where(on_bottom | on_left_low, 1.0, 0.0)

    problem = ProblemData(
        eps=eps,
        b=lambda x, y: np.broadcast_to(
            np.array([0.5, s3]), (np.size(np.atleast_1d(x)), 2)),
        a=lambda x, y: np.zeros_like(np.atleast_1d(x), dtype=float),
        f=lambda x, y: np.zeros_like(np.atleast_1d(x), dtype=float),
        g=g, c0=0.0, b_const=(0.5, s3), a_const=0.0)
    return Benchmark(problem, name="internal_layer")


def manufactured_poly(k: int, seed: int = 0) -> Benchmark:
    """Random exact solution u in P_k with eps = 1, b = (1, 1), a = 1.

    f and g follow from the PDE; (1/2) div b + a = 1, so c0 = 1."""
    rng = np.random.default_rng(seed)
    c = np.zeros((k + 1, k + 1))
    for i, j in monomial_exponents(k):
        c[i, j] = rng.uniform(-1.0, 1.0)
    cx = P.polyder(c, axis=0)
    cy = P.polyder(c, axis=1)
    cxx = P.polyder(cx, axis=0)
    cyy = P.polyder(cy, axis=1)

    def u(x, y):
        return P.polyval2d(np.asarray(x, dtype=float), np.asarray(y, dtype=float), c)

    def grad_u(x, y):
        return np.stack([P.polyval2d(x, y, cx), P.polyval2d(x, y, cy)], axis=-1)

    def f(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        lap = P.polyval2d(x, y, cxx) + P.polyval2d(x, y, cyy)
        return -lap + P.polyval2d(x, y, cx) + P.polyval2d(x, y, cy) + u(x, y)

    problem = ProblemData(
        eps=1.0,
        b=lambda x, y: np.broadcast_to(
            np.array([1.0, 1.0]), (np.size(np.atleast_1d(x)), 2)),
        a=lambda x, y: np.ones_like(np.atleast_1d(x), dtype=float),
        f=f, g=u, c0=1.0, b_const=(1.0, 1.0), a_const=1.0)
    return Benchmark(problem, u, grad_u, name=f"manufactured_p{k}")


BENCHMARKS = {
    "boundary_layer": boundary_layer,
    "internal_layer": internal_layer,
}


def verify_exact(bench: Benchmark, n_points: int = 50, seed: int = 1,
                 tol: float = 1e-8) -> float:
    """Residual spot check of the provided exact solution via central finite
    differences of the provided gradient.  Returns the max residual."""
    if bench.exact is None:
        raise ValueError("benchmark has no exact solution")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.05, 0.95, n_points)
    y = rng.uniform(0.05, 0.95, n_points)
    d = 1e-6
    gxp = bench.exact_grad(x + d, y)
    gxm = bench.exact_grad(x - d, y)
    gyp = bench.exact_grad(x, y + d)
    gym = bench.exact_grad(x, y - d)
    lap = (gxp[:, 0] - gxm[:, 0]) / (2 * d) + (gyp[:, 1] - gym[:, 1]) / (2 * d)
    g = bench.exact_grad(x, y)
    p = bench.problem
    bv = np.asarray(p.b(x, y))
    conv = bv[:, 0] * g[:, 0] + bv[:, 1] * g[:, 1]   # div-free b
    res = -p.eps * lap + conv + np.asarray(p.a(x, y)) * bench.exact(x, y) \
        - np.asarray(p.f(x, y))
    scale = max(1.0, float(np.max(np.abs(np.asarray(p.f(x, y))))))
    return float(np.max(np.abs(res)) / scale)


# ----------------------------------------------------------------- errors
def energy_error(u_h: WgFunction, bench: Benchmark, mesh: Mesh, k: int,
                 assembler: WgAssembler | None = None) -> float:
    """|||u - u_h|||: eps-weighted weak-gradient mismatch + jump + L2 term."""
    if bench.exact is None or bench.exact_grad is None:
        raise ValueError("energy_error requires an exact solution")
    asm = assembler or WgAssembler(mesh, bench.problem, k)
    eps = bench.problem.eps
    order = 2 * k + OVER_INT
    total = 0.0
    for pos in range(mesh.num_leaves):
        cell = mesh.leaves[pos]
        rule = cell_quadrature(order, cell)
        x, y = rule.points[:, 0], rule.points[:, 1]
        G, _, _, _ = asm.weak_ops(pos)
        vl = u_h.local(pos)
        gc = np.tensordot(G, vl, axes=([2], [0]))
        b1 = CellBasis(cell, k - 1)
        V1 = b1.eval(rule.points)
        gw = np.stack([V1 @ gc[0], V1 @ gc[1]], axis=1)
        gex = np.asarray(bench.exact_grad(x, y))
        total += eps * float((rule.weights[:, None] * (gex - gw) ** 2).sum())
        u0 = u_h.cell_values(pos, rule.points)
        uex = np.asarray(bench.exact(x, y))
        total += float((rule.weights * (uex - u0) ** 2).sum())
        total += asm.jump_sq(pos, vl, "tau")
    return float(np.sqrt(max(total, 0.0)))


def l2_error(u_h: WgFunction, bench: Benchmark, mesh: Mesh, k: int) -> float:
    if bench.exact is None:
        raise ValueError("l2_error requires an exact solution")
    order = 2 * k + OVER_INT
    total = 0.0
    for pos in range(mesh.num_leaves):
        rule = cell_quadrature(order, mesh.leaves[pos])
        u0 = u_h.cell_values(pos, rule.points)
        uex = np.asarray(bench.exact(rule.points[:, 0], rule.points[:, 1]))
        total += float((rule.weights * (uex - u0) ** 2).sum())
    return float(np.sqrt(max(total, 0.0)))


def star_surrogate(u_h: WgFunction, bench: Benchmark, mesh: Mesh, k: int) -> float:
    """Computable upper-bound surrogate eps^{-1/2} ||u - u_h0||."""
    return l2_error(u_h, bench, mesh, k) / math.sqrt(bench.problem.eps)
