"""Direct solvers and the dense generalized eigensolver used on regions."""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from src.errors import EigenSolverError, FactorizationError
from src.fem.operators import SparseOperator
from src.settings import max_dense_dimension

logger = logging.getLogger(__name__)

MAX_EIG_DIMENSION = 5000
EIG_REGULARIZATION = 1e-12

MatrixLike = Union[SparseOperator, sp.spmatrix, np.ndarray]


def _as_sparse(a: MatrixLike) -> sp.csr_matrix:
    if isinstance(a, SparseOperator):
        return a.matrix
    return sp.csr_matrix(a, dtype=float)


def _as_dense(a: MatrixLike) -> np.ndarray:
    if isinstance(a, SparseOperator):
        return a.to_dense()
    if sp.issparse(a):
        return a.toarray()
    return np.array(a, dtype=float)


def has_constant_kernel(matrix: sp.csr_matrix) -> bool:
    """True when every row sums to zero, i.e. constants are in the kernel."""
    if matrix.shape[0] < 2:
        return False
    scale = abs(matrix).max()
    if scale == 0.0:
        return False
    row_sums = np.asarray(matrix.sum(axis=1)).ravel()
    return bool(np.max(np.abs(row_sums)) <= 1e-10 * scale)


class Factorization:
    """Cholesky (dense) or SuperLU (sparse) factorization of a symmetric matrix.

    Matrices with constants in their kernel (pure Neumann) are factored with
    the last unknown pinned; solves then require a right-hand side orthogonal
    to constants and return the zero-mean solution.
    """

    def __init__(self, matrix: MatrixLike, max_dense: Optional[int] = None):
        matrix = _as_sparse(matrix)
        self.dim = matrix.shape[0]
        self.neumann = has_constant_kernel(matrix)
        work = matrix[:-1, :-1] if self.neumann else matrix
        max_dense = max_dense_dimension() if max_dense is None else max_dense

        self._dense = None
        self._lu = None
        try:
            if work.shape[0] < max_dense:
                self._dense = scipy.linalg.cho_factor(work.toarray(), lower=True)
            else:
                self._lu = splu(
                    work.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True},
                )
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            raise FactorizationError(f"cannot factor {self.dim}x{self.dim} operator: {exc}") from exc

    @property
    def nbytes(self) -> int:
        """Approximate memory held by the factors."""
        if self._dense is not None:
            return self._dense[0].nbytes
        return 12 * self._lu.nnz + 8 * self.dim

    def _solve_work(self, rhs: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return scipy.linalg.cho_solve(self._dense, rhs)
        return self._lu.solve(rhs)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.dim:
            raise FactorizationError(f"right-hand side has {rhs.shape[0]} rows, operator has {self.dim}")
        if not self.neumann:
            return self._solve_work(rhs)

        total = np.abs(rhs.sum(axis=0))
        scale = np.maximum(np.abs(rhs).sum(axis=0), np.finfo(float).tiny)
        if np.any(total > 1e-10 * scale):
            raise FactorizationError("right-hand side is not orthogonal to constants for a Neumann operator")
        x = np.zeros_like(rhs)
        x[:-1] = self._solve_work(rhs[:-1])
        return x - x.mean(axis=0)


def factorize(op: MatrixLike) -> Factorization:
    """Factorization of ``op``, cached on the operator when it is a SparseOperator."""
    if isinstance(op, SparseOperator):
        return op.factorization()
    return Factorization(op)


def factor_solve(op: MatrixLike, rhs: np.ndarray) -> np.ndarray:
    """Solve op x = rhs with a direct method."""
    return factorize(op).solve(rhs)


@dataclass(frozen=True, eq=False)
class EigenPairs:
    """Eigenvalues in ascending order and the B-orthonormal eigenvectors as columns."""
    values: np.ndarray
    vectors: np.ndarray

    def __len__(self) -> int:
        return self.values.size


def dense_generalized_eig(a: MatrixLike, b: MatrixLike, count: int) -> EigenPairs:
    """Lowest ``count`` eigenpairs of A psi = lambda B psi.

    B is reduced by its Cholesky factor (LAPACK's generalized symmetric
    driver). Zero rows of B are regularized with EIG_REGULARIZATION times the
    mean positive diagonal; the rest of B gets EIG_REGULARIZATION * diag(B).
    Eigenvectors are sign-normalized so their largest entry is positive.
    """
    a = _as_dense(a)
    b = _as_dense(b)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise EigenSolverError(f"eigenproblem shapes differ: {a.shape} and {b.shape}")
    n = a.shape[0]
    if n > MAX_EIG_DIMENSION:
        raise EigenSolverError(f"dense eigenproblem of dimension {n} exceeds {MAX_EIG_DIMENSION}")
    count = min(int(count), n)
    if count < 1:
        return EigenPairs(np.zeros(0), np.zeros((n, 0)))

    a = 0.5 * (a + a.T)
    b = 0.5 * (b + b.T)
    zero_rows = ~np.any(b != 0.0, axis=1)
    if zero_rows.any():
        diag = np.diag(b)
        positive = diag[diag > 0.0]
        fill = positive.mean() if positive.size else 1.0
        logger.warning("regularizing mass matrix with %d zero rows out of %d", int(zero_rows.sum()), n)
        b = b + EIG_REGULARIZATION * np.diag(np.where(zero_rows, fill, diag))

    try:
        values, vectors = scipy.linalg.eigh(a, b, subset_by_index=[0, count - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"generalized eigenproblem of dimension {n} failed: {exc}") from exc

    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0.0] = 1.0
    return EigenPairs(values, vectors * signs)


class PenalizedSolver:
    """Solver for (A + G G^T) x = b, A sparse SPD and G a block of sparse columns.

    Uses the Woodbury identity around a factorization of A, so only A and the
    small capacitance matrix I + G^T A^{-1} G are factored.
    """

    def __init__(self, a: MatrixLike, g: sp.spmatrix):
        self.a = _as_sparse(a)
        self.g = sp.csc_matrix(g, dtype=float)
        if self.g.shape[0] != self.a.shape[0]:
            raise FactorizationError(f"penalty block has {self.g.shape[0]} rows, operator has {self.a.shape[0]}")
        self._factor = Factorization(self.a)
        self._capacitance = None
        if self.g.shape[1]:
            y = self._factor.solve(self.g.toarray())
            cap = np.eye(self.g.shape[1]) + self.g.T @ y
            try:
                self._capacitance = scipy.linalg.cho_factor(0.5 * (cap + cap.T))
            except np.linalg.LinAlgError as exc:
                raise FactorizationError(f"capacitance matrix is not positive definite: {exc}") from exc

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def nbytes(self) -> int:
        """Approximate memory held by the solver: factors, capacitance and the operator blocks."""
        size = self._factor.nbytes + self.a.data.nbytes + self.a.indices.nbytes + self.g.data.nbytes + self.g.indices.nbytes
        if self._capacitance is not None:
            size += self._capacitance[0].nbytes
        return size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.a @ x + self.g @ (self.g.T @ x)

    def _apply(self, rhs: np.ndarray) -> np.ndarray:
        y = self._factor.solve(rhs)
        if self._capacitance is None:
            return y
        s = scipy.linalg.cho_solve(self._capacitance, self.g.T @ y)
        return y - self._factor.solve(self.g @ s)

    def solve(self, rhs: np.ndarray, refine: int = 2) -> np.ndarray:
        """Solve with ``refine`` steps of iterative refinement."""
        rhs = np.asarray(rhs, dtype=float)
        x = self._apply(rhs)
        for _ in range(refine):
            x = x + self._apply(rhs - self.matvec(x))
        return x
