import math
import os

import numpy as np
import pytest

from wgadapt.assembly import ProblemData, WgAssembler, tau
from wgadapt.bench import manufactured_poly
from wgadapt.dofmap import WgFunction, build_dofmap
from wgadapt.estimator import Estimator, global_estimate, weights
from wgadapt.linsolve import solve
from wgadapt.mesh import refine, uniform_grid
from wgadapt.poly import (CellBasis, cell_quadrature, facet_quadrature,
                          l2_project_cell)
from wgadapt.weakops import weak_gradient, weak_divergence


def diffusion_problem(eps=1.0, f=None, g=None):
    zero = lambda x, y: np.zeros_like(np.atleast_1d(x), dtype=float)
    return ProblemData(
        eps=eps,
        b=lambda x, y: np.zeros((np.size(np.atleast_1d(x)), 2)),
        a=zero, f=f or zero, g=g or zero, c0=0.0,
        b_const=(0.0, 0.0), a_const=0.0)


# ---------------------------------------------------------------- weights
def test_weight_examples():
    assert weights(0.5, 1.0, 1.0) == 0.5
    assert weights(0.1, 1e-4, 1.0) == 1.0
    assert weights(0.25, 1e-2, 0.0) == 1.0


def test_weight_small_cells():
    assert weights(1e-3, 1e-2, 0.0) == pytest.approx(1e-2, rel=1e-14)


# ------------------------------------------------------------- zero cases
def test_zero_everything():
    mesh = uniform_grid(2)
    p = diffusion_problem()
    u_h = WgFunction(build_dofmap(mesh, 1))
    rep = global_estimate(mesh, u_h, p, 1)
    assert rep.eta_h == 0.0
    assert rep.osc == 0.0


def test_exact_polynomial_solution_has_tiny_estimate():
    bench = manufactured_poly(2, seed=4)
    mesh = refine(uniform_grid(4), [0, 5])
    asm = WgAssembler(mesh, bench.problem, 2)
    u_h = WgFunction(asm.dofmap, solve(asm.assemble()).full)
    rep = global_estimate(mesh, u_h, bench.problem, 2, asm)
    scale = asm.energy_norm(u_h)
    assert rep.eta_h <= 1e-8 * scale
    assert rep.osc <= 1e-8 * scale


# ----------------------------------------------------------------- oracle
def make_random_state(mesh, p, k, seed):
    asm = WgAssembler(mesh, p, k)
    rng = np.random.default_rng(seed)
    u_h = WgFunction(asm.dofmap, rng.normal(size=asm.dofmap.ndofs))
    return asm, u_h


def oracle_cell_residual(mesh, pos, u_h, p, k):
    cell = mesh.leaves[pos]
    facets = [(mesh.facets[fid], nrm) for fid, nrm in mesh.cell_facets[pos]]
    vl = u_h.local(pos)
    rule = cell_quadrature(4 * k + 10, cell)
    x, y = rule.points[:, 0], rule.points[:, 1]
    bk = CellBasis(cell, k)
    b1 = CellBasis(cell, k - 1)
    R = bk.eval(rule.points) @ l2_project_cell(p.f, cell, k)
    gc = np.tensordot(weak_gradient(cell, facets, k), vl, axes=([2], [0]))
    g1 = b1.grad(rule.points)
    R += p.eps * (g1[:, :, 0] @ gc[0] + g1[:, :, 1] @ gc[1])
    R -= bk.eval(rule.points) @ (weak_divergence(cell, facets, k, p.b) @ vl)
    ah = l2_project_cell(p.a, cell, k)
    R -= (bk.eval(rule.points) @ ah) * u_h.cell_values(pos, rule.points)
    aT = weights(cell.diameter, p.eps, p.c0)
    return aT * math.sqrt(float((rule.weights * R * R).sum()))


def test_cell_residual_matches_oracle():
    mesh = refine(uniform_grid(2), [1])
    bvec = np.array([0.7, -0.4])
    p = ProblemData(
        eps=0.05,
        b=lambda x, y: np.broadcast_to(bvec, (np.size(np.atleast_1d(x)), 2)),
        a=lambda x, y: np.full(np.shape(np.atleast_1d(x)), 0.9),
        f=lambda x, y: np.sin(3.0 * np.asarray(x)) + np.asarray(y),
        g=lambda x, y: np.zeros_like(np.atleast_1d(x), dtype=float),
        c0=0.9, b_const=(0.7, -0.4), a_const=0.9)
    asm, u_h = make_random_state(mesh, p, 2, seed=21)
    est = Estimator(mesh, u_h, p, 2, asm)
    for pos in range(mesh.num_leaves):
        want = oracle_cell_residual(mesh, pos, u_h, p, 2)
        assert est.cell_residual(pos) == pytest.approx(want, rel=1e-12, abs=1e-13)


def test_stab_indicator_constant_mismatch():
    mesh = uniform_grid(1)
    p = diffusion_problem(eps=1.0)
    dm = build_dofmap(mesh, 1)
    u_h = WgFunction(dm)
    u_h.coeffs[0] = 1.0          # v0 = 1, all vb = 0
    est = Estimator(mesh, u_h, p, 1)
    h = math.sqrt(2.0)
    tv = tau(0.0, h, 1.0, mesh.kappa, 0.0)
    assert est.stab_indicator(0) == pytest.approx(math.sqrt(4.0 * tv), rel=1e-13)


def test_stab_indicator_continuous_function():
    mesh = refine(uniform_grid(2), [3])
    bench = manufactured_poly(1, seed=9)
    asm = WgAssembler(mesh, bench.problem, 1)
    u_h = WgFunction(asm.dofmap, solve(asm.assemble()).full)
    est = Estimator(mesh, u_h, bench.problem, 1, asm)
    for pos in range(mesh.num_leaves):
        assert est.stab_indicator(pos) <= 1e-10


def oracle_edge_jump(mesh, fid, u_h, p, k, mode):
    f = mesh.facets[fid]
    frule, _ = facet_quadrature(2 * k + 10, f)
    nrm = np.asarray(f.normal)
    jump = np.zeros(len(frule.weights))
    for sign, cid in zip((1.0, -1.0), f.owners):
        pos = mesh.leaf_index[cid]
        cell = mesh.leaves[pos]
        facets = [(mesh.facets[i], n) for i, n in mesh.cell_facets[pos]]
        gc = np.tensordot(weak_gradient(cell, facets, k), u_h.local(pos),
                          axes=([2], [0]))
        V1 = CellBasis(cell, k - 1).eval(frule.points)
        jump += sign * p.eps * (nrm[0] * (V1 @ gc[0]) + nrm[1] * (V1 @ gc[1]))
    sq = float((frule.weights * jump ** 2).sum())
    aE = weights(f.length, p.eps, p.c0)
    if mode == "literal":
        return math.sqrt(aE * p.eps ** -0.5 * sq)
    return aE * p.eps ** -0.5 * math.sqrt(sq)


def test_edge_jump_matches_oracle():
    mesh = refine(uniform_grid(2), [0])
    p = diffusion_problem(eps=0.01)
    asm, u_h = make_random_state(mesh, p, 2, seed=3)
    for mode in ("literal", "squared"):
        est = Estimator(mesh, u_h, p, 2, asm, edge_weight_mode=mode)
        for f in mesh.facets:
            if f.boundary:
                assert est.edge_jump(f.id) == 0.0
            else:
                want = oracle_edge_jump(mesh, f.id, u_h, p, 2, mode)
                assert est.edge_jump(f.id) == pytest.approx(want, rel=1e-12,
                                                            abs=1e-14)


def test_edge_weight_mode_relation():
    mesh = uniform_grid(2)
    p = diffusion_problem(eps=0.04)
    asm, u_h = make_random_state(mesh, p, 1, seed=8)
    lit = Estimator(mesh, u_h, p, 1, asm, "literal")
    sq = Estimator(mesh, u_h, p, 1, asm, "squared")
    for f in mesh.facets:
        if f.boundary:
            continue
        aE = weights(f.length, p.eps, p.c0)
        ratio = aE * p.eps ** -0.5
        assert sq.edge_jump(f.id) ** 2 == pytest.approx(
            ratio * lit.edge_jump(f.id) ** 2, rel=1e-12)


def test_bad_edge_weight_mode():
    mesh = uniform_grid(1)
    u_h = WgFunction(build_dofmap(mesh, 1))
    with pytest.raises(ValueError):
        Estimator(mesh, u_h, diffusion_problem(), 1, edge_weight_mode="weird")


# ------------------------------------------------------------ oscillation
def test_oscillation_polynomial_data_zero():
    bench = manufactured_poly(2, seed=1)
    mesh = uniform_grid(2)
    asm, u_h = make_random_state(mesh, bench.problem, 2, seed=5)
    est = Estimator(mesh, u_h, bench.problem, 2, asm)
    for pos in range(mesh.num_leaves):
        assert est.oscillation(pos) <= 1e-12


def test_oscillation_exponential_oracle():
    f = lambda x, y: np.exp(np.asarray(x, dtype=float))
    p = diffusion_problem(f=f)
    mesh = uniform_grid(1)
    u_h = WgFunction(build_dofmap(mesh, 1))
    est = Estimator(mesh, u_h, p, 1)
    cell = mesh.leaves[0]
    rule = cell_quadrature(24, cell)
    fh = l2_project_cell(f, cell, 1)
    resid = f(rule.points[:, 0], rule.points[:, 1]) \
        - CellBasis(cell, 1).eval(rule.points) @ fh
    want = weights(cell.diameter, 1.0, 0.0) * math.sqrt(
        float((rule.weights * resid ** 2).sum()))
    assert est.oscillation(0) == pytest.approx(want, rel=1e-8)


# --------------------------------------------------------------- globals
def test_report_identity_and_scaling():
    mesh = refine(uniform_grid(2), [2])
    p = diffusion_problem(eps=0.1, f=lambda x, y: np.cos(np.asarray(x, dtype=float)))
    asm, u_h = make_random_state(mesh, p, 2, seed=13)
    rep = global_estimate(mesh, u_h, p, 2, asm)
    ident = math.sqrt((rep.eta_T1 ** 2).sum() + (rep.eta_T2 ** 2).sum()
                      + (rep.eta_E ** 2).sum())
    assert rep.eta_h == pytest.approx(ident, rel=1e-13)

    s = 3.0
    ps = diffusion_problem(eps=0.1,
                           f=lambda x, y: s * np.cos(np.asarray(x, dtype=float)))
    us = WgFunction(asm.dofmap, s * u_h.coeffs)
    rep_s = global_estimate(mesh, us, ps, 2)
    assert rep_s.eta_h == pytest.approx(s * rep.eta_h, rel=1e-12)
    assert rep_s.osc == pytest.approx(s * rep.osc, rel=1e-12)


def test_cell_indicators_composition():
    mesh = uniform_grid(2)
    p = diffusion_problem(eps=0.5, f=lambda x, y: np.asarray(x, dtype=float))
    asm, u_h = make_random_state(mesh, p, 1, seed=2)
    rep = global_estimate(mesh, u_h, p, 1, asm)
    ind = rep.cell_indicators(mesh)
    for pos in range(mesh.num_leaves):
        want = rep.eta_T1[pos] ** 2 + rep.eta_T2[pos] ** 2
        for fid, _ in mesh.cell_facets[pos]:
            if not mesh.facets[fid].boundary:
                want += 0.5 * rep.eta_E[fid] ** 2
        assert ind[pos] == pytest.approx(want, rel=1e-13)


def test_csv_dump(tmp_path):
    mesh = uniform_grid(2)
    p = diffusion_problem()
    u_h = WgFunction(build_dofmap(mesh, 1))
    rep = global_estimate(mesh, u_h, p, 1)
    path = os.path.join(tmp_path, "ind.csv")
    rep.save_csv(path)
    lines = open(path).read().splitlines()
    assert lines[0] == "cell_id,eta_T1,eta_T2,osc,alpha_T"
    assert lines[1 + mesh.num_leaves] == "facet_id,eta_E,alpha_E"
    assert len(lines) == 2 + mesh.num_leaves + len(mesh.facets)
