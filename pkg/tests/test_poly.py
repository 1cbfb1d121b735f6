import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wgadapt.mesh import uniform_grid
from wgadapt.poly import (CellBasis, FacetBasis, cell_quadrature,
                          facet_quadrature, l2_project_cell, l2_project_facet,
                          monomial_exponents, space_dim)


@pytest.fixture
def unit_cell():
    return uniform_grid(1).leaves[0]


@pytest.fixture
def mesh2():
    return uniform_grid(2)


def test_cell_quadrature_constant(unit_cell):
    rule = cell_quadrature(1, unit_cell)
    assert rule.weights.sum() == pytest.approx(1.0)


def test_cell_quadrature_x2y(unit_cell):
    rule = cell_quadrature(3, unit_cell)
    val = (rule.weights * rule.points[:, 0] ** 2 * rule.points[:, 1]).sum()
    assert val == pytest.approx(1 / 6, abs=1e-14)


def test_cell_quadrature_product_exactness(mesh2):
    # order 2k+2 rule integrates products of two P_{k+1} basis functions
    cell = mesh2.leaves[3]
    for k in (1, 2, 3):
        basis = CellBasis(cell, k + 1)
        rule = cell_quadrature(2 * k + 2, cell)
        ref = cell_quadrature(2 * k + 12, cell)
        Va, Vr = basis.eval(rule.points), basis.eval(ref.points)
        Ma = Va.T @ (Va * rule.weights[:, None])
        Mr = Vr.T @ (Vr * ref.weights[:, None])
        assert np.max(np.abs(Ma - Mr)) < 1e-14


def test_facet_quadrature(mesh2):
    f = mesh2.facets[0]
    assert f.length == pytest.approx(0.5)
    rule, t = facet_quadrature(1, f)
    assert rule.weights.sum() == pytest.approx(f.length)
    rule, t = facet_quadrature(2, f)
    # s^2 on [-1,1] reference with unit half-length
    assert (rule.weights / (f.length / 2) * t ** 2).sum() == pytest.approx(2 / 3)


def test_facet_product_exactness(mesh2):
    f = mesh2.interior_facets()[0]
    for k in (1, 2, 3):
        basis = FacetBasis(f, k)
        rule, t = facet_quadrature(2 * k, f)
        ref, tr = facet_quadrature(2 * k + 10, f)
        Ma = basis.eval_param(t).T @ (basis.eval_param(t) * rule.weights[:, None])
        Mr = basis.eval_param(tr).T @ (basis.eval_param(tr) * ref.weights[:, None])
        assert np.max(np.abs(Ma - Mr)) < 1e-14


def test_mass_matrix_spd(unit_cell):
    for k in (1, 2, 3, 4):
        M = CellBasis(unit_cell, k).mass_matrix()
        w = np.linalg.eigvalsh(M)
        assert w.min() > 0
        assert w.max() / w.min() < 1e6


def test_project_reproduces_basis_function(unit_cell):
    basis = CellBasis(unit_cell, 2)
    f = lambda x, y: basis.eval(np.column_stack([x, y]))[:, 2]
    c = l2_project_cell(f, unit_cell, 2)
    e2 = np.zeros(basis.dim)
    e2[2] = 1.0
    assert np.allclose(c, e2, atol=1e-12)


def test_project_mean_value(unit_cell):
    c = l2_project_cell(lambda x, y: np.exp(x), unit_cell, 0, order=20)
    assert c[0] == pytest.approx(np.e - 1, abs=1e-14)
    # default over-integration rule is close but not exact for exp
    c = l2_project_cell(lambda x, y: np.exp(x), unit_cell, 0)
    assert c[0] == pytest.approx(np.e - 1, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=3), st.integers(min_value=0, max_value=10 ** 9))
def test_project_exact_on_polynomials(k, seed):
    cell = uniform_grid(2).leaves[1]
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-1, 1, space_dim(k))
    basis = CellBasis(cell, k)
    f = lambda x, y: basis.eval(np.column_stack([x, y])) @ coeffs
    c = l2_project_cell(f, cell, k)
    assert np.allclose(c, coeffs, atol=1e-12)


def test_projection_idempotent(unit_cell):
    c1 = l2_project_cell(lambda x, y: np.sin(3 * x + y), unit_cell, 3)
    basis = CellBasis(unit_cell, 3)
    c2 = l2_project_cell(
        lambda x, y: basis.eval(np.column_stack([x, y])) @ c1, unit_cell, 3)
    assert np.allclose(c1, c2, atol=1e-12)


def test_project_facet(mesh2):
    f = mesh2.facets[0]
    c = l2_project_facet(lambda x, y: np.ones_like(x), f, 2)
    assert np.allclose(c, [1.0, 0.0, 0.0], atol=1e-13)
    # linear in arc length reproduced exactly
    c = l2_project_facet(lambda x, y: x + y, f, 2)
    basis = FacetBasis(f, 2)
    rule, t = facet_quadrature(6, f)
    vals = basis.eval_param(t) @ c
    assert np.allclose(vals, rule.points.sum(axis=1), atol=1e-12)


def test_monomial_layout():
    assert monomial_exponents(2) == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    assert space_dim(3) == 10
