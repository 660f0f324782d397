"""Overlapping additive Schwarz preconditioners, one- and two-level."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from src.coeff.field import CoefficientField
from src.errors import FactorizationError
from src.fem.assembly import assemble_stiffness
from src.fem.operators import SparseOperator
from src.fem.solvers import Factorization
from src.grid.hierarchy import GridHierarchy, Region
from src.precond.base import Preconditioner, PreconditionerKind

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class LocalSolve:
    """R_j^T A_j^{-1} R_j for one subdomain, A_j the principal submatrix on its free dofs."""
    index: np.ndarray
    factor: Factorization

    def apply(self, r: np.ndarray) -> np.ndarray:
        return self.factor.solve(r[self.index])


def galerkin_operator(a: SparseOperator, basis: Union[sp.spmatrix, np.ndarray]) -> np.ndarray:
    """A_0 = R_0 A R_0^T with the coarse functions as the columns of ``basis``."""
    basis = sp.csc_matrix(basis)
    a0 = (basis.T @ (a.matrix @ basis)).toarray()
    return 0.5 * (a0 + a0.T)


class CoarseCorrection:
    """r -> R_0 A_0^{-1} R_0^T r with A_0 factored once by dense Cholesky."""

    def __init__(self, basis: Union[sp.spmatrix, np.ndarray], a0: np.ndarray):
        self.basis = sp.csc_matrix(basis)
        self.dim = self.basis.shape[1]
        self._factor = None
        if self.dim:
            try:
                self._factor = scipy.linalg.cho_factor(a0)
            except np.linalg.LinAlgError as exc:
                raise FactorizationError(
                    f"coarse operator of dimension {self.dim} is not positive definite; "
                    "the coarse basis is probably linearly dependent"
                ) from exc

    @classmethod
    def galerkin(cls, a: SparseOperator, basis) -> "CoarseCorrection":
        return cls(basis, galerkin_operator(a, basis))

    def apply(self, r: np.ndarray) -> np.ndarray:
        if self._factor is None:
            return np.zeros_like(r, dtype=float)
        return self.basis @ scipy.linalg.cho_solve(self._factor, self.basis.T @ r)


def coarse_basis_of(coarse) -> sp.csc_matrix:
    """Basis matrix of a coarse space object, or the argument itself when it is a matrix."""
    if hasattr(coarse, "basis"):
        return sp.csc_matrix(coarse.basis)
    return sp.csc_matrix(coarse)


class AdditiveSchwarz(Preconditioner):
    """M^{-1} = [R_0 A_0^{-1} R_0^T] + sum_j R_j^T A_j^{-1} R_j.

    Local contributions are summed in subdomain order whatever the thread
    schedule.
    """

    def __init__(
        self,
        operator: SparseOperator,
        locals_: list[LocalSolve],
        coarse: Optional[CoarseCorrection] = None,
        jobs: int = 1,
    ):
        super().__init__(operator)
        self.locals = locals_
        self.coarse = coarse
        self.jobs = jobs
        self.kind = PreconditionerKind.TWO_LEVEL if coarse is not None else PreconditionerKind.ONE_LEVEL

    @property
    def coarse_dim(self) -> int:
        return self.coarse.dim if self.coarse is not None else 0

    def _local_parts(self, r: np.ndarray) -> list[np.ndarray]:
        if self.jobs <= 1:
            return [local.apply(r) for local in self.locals]
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(lambda local: local.apply(r), self.locals))

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        z = self.coarse.apply(r) if self.coarse is not None else np.zeros_like(r)
        for local, part in zip(self.locals, self._local_parts(r)):
            z[local.index] += part
        return z


def _local_solves(g: GridHierarchy, operator: SparseOperator, subdomains: list[Region]) -> list[LocalSolve]:
    solves = []
    for region in subdomains:
        index = g.free_index[region.interior_nodes]
        index = index[index >= 0]
        if index.size == 0:
            continue
        solves.append(LocalSolve(index, Factorization(operator.matrix[index][:, index])))
    return solves


def one_level(
    g: GridHierarchy,
    field: CoefficientField,
    subdomains: list[Region],
    operator: Optional[SparseOperator] = None,
    jobs: int = 1,
) -> AdditiveSchwarz:
    """One-level additive Schwarz with Dirichlet solves on every D_j'."""
    operator = operator if operator is not None else assemble_stiffness(g, field)
    solves = _local_solves(g, operator, subdomains)
    logger.info("one-level additive Schwarz: %d local solvers", len(solves))
    return AdditiveSchwarz(operator, solves, jobs=jobs)


def two_level(
    g: GridHierarchy,
    field: CoefficientField,
    subdomains: list[Region],
    coarse,
    operator: Optional[SparseOperator] = None,
    jobs: int = 1,
) -> AdditiveSchwarz:
    """Two-level additive Schwarz; ``coarse`` is a coarse space or a raw basis matrix (columns)."""
    operator = operator if operator is not None else assemble_stiffness(g, field)
    basis = coarse_basis_of(coarse)
    if basis.shape[0] != operator.dim:
        raise ValueError(f"coarse basis has {basis.shape[0]} rows, operator has {operator.dim}")
    correction = CoarseCorrection.galerkin(operator, basis)
    solves = _local_solves(g, operator, subdomains)
    logger.info("two-level additive Schwarz: %d local solvers, coarse dim %d", len(solves), correction.dim)
    return AdditiveSchwarz(operator, solves, correction, jobs=jobs)
