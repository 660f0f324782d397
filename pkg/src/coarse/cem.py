"""Constrained energy minimizing coarse space.

The auxiliary space holds, per coarse block K, the lowest eigenvectors of
the kappa-stiffness against the kappa-hat mass. With kappa-hat-orthonormal
phi_j^K the stabilization s(pi u, pi v) over the free dofs is u^T G G^T v,
where column (K, j) of G is the free-dof scatter of M_K phi_j^K.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from src.coeff.field import CoefficientField
from src.coarse.pou import PartitionOfUnity
from src.coarse.spectral import Selection, local_operators, run_regions, scatter_columns, select_count
from src.errors import GridError
from src.fem.assembly import assemble_stiffness, build_weight
from src.fem.operators import SparseOperator, WeightField
from src.fem.solvers import PenalizedSolver, dense_generalized_eig
from src.grid.hierarchy import GridHierarchy, coarse_block, oversample

logger = logging.getLogger(__name__)

BrokenVector = list[np.ndarray]


@dataclass(frozen=True, eq=False)
class AuxBlock:
    """Auxiliary eigenpairs of one coarse block K over its unknowns ``nodes``."""
    block_id: int
    nodes: np.ndarray
    mass: SparseOperator
    eigenvalues: np.ndarray
    vectors: np.ndarray

    @property
    def count(self) -> int:
        return self.vectors.shape[1]

    @property
    def next_eigenvalue(self) -> float:
        if self.count < self.eigenvalues.size:
            return float(self.eigenvalues[self.count])
        return float("inf")


@dataclass(eq=False)
class AuxiliarySpace:
    grid: GridHierarchy
    weight: WeightField
    blocks: list[AuxBlock]

    @property
    def dim(self) -> int:
        return sum(block.count for block in self.blocks)

    @property
    def counts(self) -> list[int]:
        return [block.count for block in self.blocks]

    @property
    def min_excluded_eigenvalue(self) -> float:
        return min(block.next_eigenvalue for block in self.blocks)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Column offset of each block's functions in the constraint matrix."""
        return np.concatenate([[0], np.cumsum(self.counts)])

    @cached_property
    def constraint(self) -> sp.csc_matrix:
        """G (n_free x dim): column (K, j) is M_K phi_j^K in the free-dof numbering."""
        columns = [
            scatter_columns(self.grid, block.nodes, block.mass @ block.vectors)
            for block in self.blocks
        ]
        return sp.hstack(columns, format="csc")

    def broken(self, v: np.ndarray) -> BrokenVector:
        """Restrictions of a free-dof vector to every block."""
        v = np.asarray(v, dtype=float)
        return [v[self.grid.free_index[block.nodes]] for block in self.blocks]

    def coefficients(self, v: Union[np.ndarray, BrokenVector]) -> np.ndarray:
        """(phi_j^K, v)_{kappa-hat, K} for every (K, j)."""
        if isinstance(v, np.ndarray):
            return self.constraint.T @ v
        return np.concatenate([
            block.vectors.T @ (block.mass @ local) for block, local in zip(self.blocks, v)
        ])


def build_cem_aux(
    g: GridHierarchy,
    field: CoefficientField,
    pou: PartitionOfUnity,
    selection: Optional[Selection] = None,
    jobs: int = 1,
) -> AuxiliarySpace:
    """Lowest eigenpairs of int_K kappa |grad v|^2 / int_K kappa-hat v^2 on every coarse block."""
    selection = selection or Selection()
    weight = build_weight(g, field, pou)

    def build(k: int) -> AuxBlock:
        region = coarse_block(g, k)
        a, b = local_operators(g, field, region, weight)
        pairs = dense_generalized_eig(a, b, selection.candidates)
        count = select_count(selection, pairs, region, "coarse block")
        logger.debug("coarse block %d: eigenvalues %s, keeping %d", k, np.array2string(pairs.values, precision=3), count)
        return AuxBlock(k, a.nodes, b, pairs.values, pairs.vectors[:, :count])

    aux = AuxiliarySpace(g, weight, run_regions(build, g.n_coarse_cells, jobs))
    logger.info("auxiliary space: dim=%d over %d blocks, Lambda=%.4g", aux.dim, len(aux.blocks), aux.min_excluded_eigenvalue)
    return aux


def project_aux(v: Union[np.ndarray, BrokenVector], aux: AuxiliarySpace) -> BrokenVector:
    """pi_D v: blockwise kappa-hat-orthogonal projection onto V_aux(K).

    ``v`` is a free-dof vector or a broken (per-block) vector; the result is
    broken, since pi_D v may jump across block boundaries.
    """
    local = aux.broken(v) if isinstance(v, np.ndarray) else v
    return [
        block.vectors @ (block.vectors.T @ (block.mass @ part))
        for block, part in zip(aux.blocks, local)
    ]


@dataclass(eq=False)
class CemCoarseSpace:
    """Multiscale basis psi_{j,ms}^K on the oversampled blocks K+."""
    aux: AuxiliarySpace
    layers: int
    basis: sp.csc_matrix
    residuals: np.ndarray
    variant: str = "cem"

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def counts(self) -> list[int]:
        return self.aux.counts

    @property
    def eigenvalues(self) -> list[np.ndarray]:
        return [block.eigenvalues for block in self.aux.blocks]

    @property
    def min_excluded_eigenvalue(self) -> float:
        return self.aux.min_excluded_eigenvalue

    @property
    def weight(self) -> WeightField:
        return self.aux.weight


def penalized_local_solver(
    a_free: SparseOperator, constraint: sp.csr_matrix, local: np.ndarray
) -> tuple[PenalizedSolver, np.ndarray]:
    """Solver for (A + G G^T) restricted to the free dofs ``local``.

    Returns the solver and the constraint columns it kept (those touching ``local``).
    """
    g_local = constraint[local].tocsc()
    active = np.flatnonzero(np.diff(g_local.indptr) > 0)
    solver = PenalizedSolver(a_free.matrix[local][:, local], g_local[:, active])
    return solver, active


def build_cem_basis(
    g: GridHierarchy,
    field: CoefficientField,
    aux: AuxiliarySpace,
    layers: int,
    jobs: int = 1,
    stiffness: Optional[SparseOperator] = None,
) -> CemCoarseSpace:
    """Solve a(psi, v) + s(pi psi, pi v) = s(phi_j^K, pi v) on K+ for every (K, j).

    K+ is K grown by ``layers`` coarse layers, with zero Dirichlet data on its
    boundary. ``stiffness`` is the global free-dof operator if already assembled.
    """
    if layers < 1:
        raise GridError(f"oversampling layers must be at least 1, got {layers}")
    a_free = stiffness if stiffness is not None else assemble_stiffness(g, field)
    constraint = aux.constraint.tocsr()
    offsets = aux.offsets

    def build(k: int) -> tuple[sp.csc_matrix, float]:
        block = aux.blocks[k]
        if block.count == 0:
            return sp.csc_matrix((g.n_free, 0)), 0.0
        region = oversample(g, coarse_block(g, k), layers)
        local = g.free_index[region.interior_nodes]
        solver, _ = penalized_local_solver(a_free, constraint, local)
        rhs = constraint[local][:, offsets[k]:offsets[k + 1]].toarray()
        psi = solver.solve(rhs)
        residual = np.linalg.norm(solver.matvec(psi) - rhs, axis=0) / np.linalg.norm(rhs, axis=0)
        return scatter_columns(g, region.interior_nodes, psi), float(residual.max())

    results = run_regions(build, g.n_coarse_cells, jobs)
    basis = sp.hstack([cols for cols, _ in results], format="csc")
    residuals = np.array([res for _, res in results])
    logger.info("cem coarse space: dim=%d, layers=%d, max residual %.2e", basis.shape[1], layers, residuals.max())
    return CemCoarseSpace(aux, layers, basis, residuals)


def cem_stabilization(aux: AuxiliarySpace, u: np.ndarray, v: np.ndarray) -> float:
    """s(pi u, pi v) for free-dof vectors."""
    return float(aux.coefficients(u) @ aux.coefficients(v))
