"""Tests for Q1 assembly, direct solvers and the dense generalized eigensolver."""

import numpy as np
import pytest
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from src.coarse.pou import build_pou
from src.coeff.field import CoefficientField, generate
from src.errors import EigenSolverError, FactorizationError
from src.fem.assembly import (
    MASS_ELEMENT,
    BoundaryCondition,
    assemble_load,
    assemble_stiffness,
    assemble_weighted_mass,
    build_weight,
)
from src.fem.operators import SparseOperator
from src.fem.solvers import Factorization, PenalizedSolver, dense_generalized_eig, factor_solve
from src.grid.hierarchy import build_hierarchy, coarse_block, domain, neighborhood
from src.precond.schwarz import galerkin_operator


def random_spd(rng, n, shift=1.0):
    x = rng.standard_normal((n, n))
    return x @ x.T + shift * np.eye(n)


def test_interior_stencil_of_unit_laplacian():
    g = build_hierarchy(8, 2)
    a = assemble_stiffness(g, generate(g, "constant"))
    row = a.matrix[g.free_index[g.node_index(4, 4)]].toarray().ravel()
    assert row[g.free_index[g.node_index(4, 4)]] == pytest.approx(8 / 3)
    neighbors = [g.free_index[g.node_index(4 + di, 4 + dj)] for di in (-1, 0, 1) for dj in (-1, 0, 1) if di or dj]
    assert np.allclose(row[neighbors], -1 / 3)
    assert np.count_nonzero(row) == 9
    assert abs(row.sum()) < 1e-14


def test_stiffness_is_symmetric_and_linear_in_kappa(grid16, channels16):
    a = assemble_stiffness(grid16, channels16)
    assert (a.matrix - a.matrix.T).count_nonzero() == 0
    scaled = assemble_stiffness(grid16, channels16.scaled(7.0))
    assert np.allclose(scaled.to_dense(), 7.0 * a.to_dense(), rtol=1e-14, atol=0)


def test_neumann_rows_sum_to_zero(grid16, channels16):
    region = neighborhood(grid16, grid16.coarse_node_index(0, 2))
    a = assemble_stiffness(grid16, channels16, region, BoundaryCondition.NEUMANN)
    assert a.dim == region.nodes.size
    row_sums = np.asarray(a.matrix.sum(axis=1)).ravel()
    assert np.max(np.abs(row_sums)) <= 1e-10 * channels16.kappa_max


def test_single_element_mass():
    g = build_hierarchy(2, 2)
    m = assemble_weighted_mass(g, 1.0, coarse_block(g, 0), BoundaryCondition.NEUMANN)
    # sorted node order is (0,0), (1,0), (0,1), (1,1); element order is counterclockwise
    perm = [0, 1, 3, 2]
    expected = g.h ** 2 * MASS_ELEMENT[np.ix_(perm, perm)]
    assert np.allclose(m.to_dense(), expected, rtol=1e-14, atol=0)
    assert np.allclose(expected * 36 / g.h ** 2, [[4, 2, 2, 1], [2, 4, 1, 2], [2, 1, 4, 2], [1, 2, 2, 4]])


def test_global_mass_integrates_to_area(grid16):
    m = assemble_weighted_mass(grid16, 1.0, None, BoundaryCondition.NEUMANN)
    assert m.matrix.sum() == pytest.approx(1.0, rel=1e-13)


def test_zero_weight_cell_contributes_nothing(grid16):
    w = np.ones(grid16.n_fine_cells)
    w[grid16.cell_index(5, 5)] = 0.0
    full = assemble_weighted_mass(grid16, 1.0, None, BoundaryCondition.NEUMANN)
    holed = assemble_weighted_mass(grid16, w, None, BoundaryCondition.NEUMANN)
    assert full.matrix.sum() - holed.matrix.sum() == pytest.approx(grid16.h ** 2, rel=1e-12)


def test_load_vectors(grid16, rng):
    assert assemble_load(grid16, 1.0).sum() == pytest.approx(1.0, rel=1e-13)
    assert not np.any(assemble_load(grid16, 0.0))
    assert assemble_load(grid16, lambda x, y: np.ones_like(x)).sum() == pytest.approx(1.0, rel=1e-13)
    assert assemble_load(grid16, np.ones(grid16.n_fine_nodes)).sum() == pytest.approx(1.0, rel=1e-13)

    region = neighborhood(grid16, grid16.coarse_node_index(2, 2))
    f = np.zeros(grid16.n_fine_cells)
    values = rng.uniform(-1, 1, region.cells.size)
    f[region.cells] = values - values.mean()
    load = assemble_load(grid16, f, region, BoundaryCondition.NEUMANN)
    assert load.size == region.nodes.size
    assert abs(load.sum()) < 1e-15


def test_load_rejects_wrong_sizes(grid16):
    with pytest.raises(ValueError):
        assemble_load(grid16, np.ones(7))


def test_weight_at_coarse_cell_center():
    g = build_hierarchy(12, 4)
    field = generate(g, "constant")
    w = build_weight(g, field, build_pou(g))
    center_cell = g.cell_index(1, 1)
    assert w.values[center_cell] == pytest.approx(2.0 / g.H ** 2, rel=1e-12)
    assert np.all(w.values > 0.0)
    doubled = build_weight(g, field.scaled(2.0), build_pou(g))
    assert np.allclose(doubled.values, 2.0 * w.values, rtol=1e-14)


def test_factor_solve_small_examples():
    assert np.allclose(factor_solve(sp.identity(3, format="csr"), np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])
    x = factor_solve(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0]))
    assert np.allclose(x, [1.0, 1.0], rtol=1e-14)


@pytest.mark.parametrize("max_dense", [0, 10_000])
def test_neumann_solve_returns_zero_mean_solution(grid16, channels16, rng, max_dense):
    region = neighborhood(grid16, grid16.coarse_node_index(2, 2))
    a = assemble_stiffness(grid16, channels16, region, BoundaryCondition.NEUMANN)
    factor = Factorization(a.matrix, max_dense=max_dense)
    assert factor.neumann
    rhs = rng.standard_normal(a.dim)
    rhs -= rhs.mean()
    x = factor.solve(rhs)
    assert abs(x.mean()) < 1e-12 * np.abs(x).max()
    assert np.linalg.norm(a @ x - rhs) <= 1e-10 * np.linalg.norm(rhs) * channels16.kappa_max

    with pytest.raises(FactorizationError):
        factor.solve(np.ones(a.dim))


def test_sparse_and_dense_paths_agree(grid16, channels16, rng):
    a = assemble_stiffness(grid16, channels16)
    rhs = rng.standard_normal(a.dim)
    dense = Factorization(a.matrix, max_dense=10_000).solve(rhs)
    sparse = Factorization(a.matrix, max_dense=0).solve(rhs)
    assert np.allclose(dense, sparse, rtol=1e-8, atol=1e-10 * np.abs(dense).max())
    assert np.linalg.norm(a @ sparse - rhs) <= 1e-10 * np.linalg.norm(rhs) * channels16.kappa_max


@pytest.mark.parametrize("limit, dense", [("0", False), ("10000", True)])
def test_dense_limit_is_read_from_the_environment(grid16, channels16, monkeypatch, limit, dense):
    monkeypatch.setenv("HCDD_MAX_DENSE", limit)
    a = assemble_stiffness(grid16, channels16)
    factor = Factorization(a.matrix)
    assert (factor.nbytes == 8 * a.dim ** 2) is dense
    assert factor.nbytes > 0


def test_operator_caches_its_factorization(grid16, unit_field16):
    a = assemble_stiffness(grid16, unit_field16)
    assert a.factorization() is a.factorization()


def test_generalized_eig_diagonal():
    pairs = dense_generalized_eig(np.diag([2.0, 1.0]), np.eye(2), 2)
    assert np.allclose(pairs.values, [1.0, 2.0])


def test_generalized_eig_matches_cholesky_congruence(rng):
    for _ in range(50):
        n = int(rng.integers(2, 51))
        a = random_spd(rng, n, shift=0.0)
        b = random_spd(rng, n)
        count = int(rng.integers(1, n + 1))
        pairs = dense_generalized_eig(a, b, count)

        chol = np.linalg.cholesky(b)
        inv = np.linalg.inv(chol)
        reference = np.linalg.eigvalsh(inv @ a @ inv.T)[:count]
        assert np.allclose(pairs.values, reference, rtol=1e-8, atol=1e-8 * abs(reference).max())

        residual = a @ pairs.vectors - b @ pairs.vectors * pairs.values
        scale = np.linalg.norm(a) + np.abs(pairs.values).max() * np.linalg.norm(b)
        assert np.linalg.norm(residual, axis=0).max() <= 1e-8 * scale
        gram = pairs.vectors.T @ b @ pairs.vectors
        assert np.allclose(gram, np.eye(count), atol=1e-8)


def test_generalized_eig_scale_invariance(rng):
    a = random_spd(rng, 12, shift=0.0)
    b = random_spd(rng, 12)
    base = dense_generalized_eig(a, b, 5).values
    scaled = dense_generalized_eig(1e3 * a, 1e3 * b, 5).values
    assert np.allclose(base, scaled, rtol=1e-8, atol=1e-8 * base.max())


def test_floating_neumann_region_has_constant_ground_state(grid16, unit_field16):
    region = neighborhood(grid16, grid16.coarse_node_index(2, 2))
    a = assemble_stiffness(grid16, unit_field16, region, BoundaryCondition.NEUMANN)
    b = assemble_weighted_mass(grid16, unit_field16, region, BoundaryCondition.NEUMANN)
    pairs = dense_generalized_eig(a, b, 3)
    assert abs(pairs.values[0]) <= 1e-10
    ground = pairs.vectors[:, 0]
    assert np.ptp(ground) <= 1e-8 * abs(ground).max()
    assert ground.max() > 0


def test_zero_mass_rows_are_regularized(caplog):
    a = np.diag([1.0, 2.0, 3.0])
    b = np.diag([1.0, 1.0, 0.0])
    pairs = dense_generalized_eig(a, b, 2)
    assert np.allclose(pairs.values, [1.0, 2.0], rtol=1e-9)
    assert "regularizing" in caplog.text


def test_generalized_eig_rejects_mismatched_shapes():
    with pytest.raises(EigenSolverError):
        dense_generalized_eig(np.eye(3), np.eye(2), 1)


def test_unit_laplacian_ground_state_approaches_two_pi_squared(grid32):
    field = generate(grid32, "constant")
    a = assemble_stiffness(grid32, field)
    m = assemble_weighted_mass(grid32, 1.0)
    lowest = dense_generalized_eig(a, m, 1).values[0]
    assert lowest == pytest.approx(2 * np.pi ** 2, rel=0.05)


def test_galerkin_operator_matches_coarse_assembly():
    g = build_hierarchy(16, 4)
    coarse = build_hierarchy(4, 2)
    kappa_coarse = np.array([1.0, 30.0, 5.0, 1e3, 2.0, 7.0, 1.0, 4.0, 9.0, 1.0, 1e2, 3.0, 6.0, 1.0, 8.0, 2.0])
    fine_field = CoefficientField(kappa_coarse[g.cell_to_coarse], 16)
    coarse_field = CoefficientField(kappa_coarse, 4)

    pou = build_pou(g)
    interior = np.flatnonzero(~coarse.boundary_mask)
    basis = pou.matrix.tocsr()[g.free_nodes][:, interior]
    a0 = galerkin_operator(assemble_stiffness(g, fine_field), basis)
    direct = assemble_stiffness(coarse, coarse_field).to_dense()
    assert np.allclose(a0, direct, rtol=1e-12, atol=1e-12 * np.abs(direct).max())


def test_penalized_solver_matches_dense_solve(grid16, channels16, rng):
    a = assemble_stiffness(grid16, channels16)
    g_block = sp.random(a.dim, 6, density=0.05, random_state=7, format="csc") * 10.0
    solver = PenalizedSolver(a, g_block)
    rhs = rng.standard_normal(a.dim)
    x = solver.solve(rhs)
    dense = a.to_dense() + (g_block @ g_block.T).toarray()
    assert np.linalg.norm(dense @ x - rhs) <= 1e-10 * np.linalg.norm(rhs) * channels16.kappa_max
    reference = np.linalg.solve(dense, rhs)
    assert np.allclose(x, reference, rtol=1e-7, atol=1e-8 * np.abs(reference).max())


def test_matrix_market_export(grid16, unit_field16, tmp_path):
    a = assemble_stiffness(grid16, unit_field16)
    path = a.export_matrix_market(tmp_path / "A.mtx")
    back = scipy.io.mmread(str(path))
    assert np.allclose(back.toarray(), a.to_dense())


def test_sparse_operator_requires_square():
    with pytest.raises(ValueError):
        SparseOperator(sp.csr_matrix((3, 4)))


def test_domain_region_gives_free_dof_numbering(grid16, unit_field16):
    a = assemble_stiffness(grid16, unit_field16, domain(grid16))
    assert np.array_equal(a.nodes, grid16.free_nodes)
