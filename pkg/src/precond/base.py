"""Preconditioner interface and the trivial preconditioners."""

from abc import ABC, abstractmethod
from enum import Enum

import numpy as np
from scipy.sparse.linalg import LinearOperator

from src.fem.operators import SparseOperator


class PreconditionerKind(str, Enum):
    IDENTITY = "identity"
    EXACT = "exact"
    ONE_LEVEL = "one_level"
    TWO_LEVEL = "two_level_additive"
    HYBRID_CEM = "hybrid_cem"


class Preconditioner(ABC):
    """A linear map r -> M^{-1} r on the free fine dofs."""

    kind: PreconditionerKind

    def __init__(self, operator: SparseOperator):
        self.operator = operator

    @property
    def dim(self) -> int:
        return self.operator.dim

    @property
    def name(self) -> str:
        return self.kind.value

    @abstractmethod
    def apply(self, r: np.ndarray) -> np.ndarray:
        """Apply M^{-1} to a residual."""

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.apply(r)

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.dim, self.dim), matvec=self.apply, dtype=float)

    def to_dense(self) -> np.ndarray:
        """M^{-1} column by column."""
        eye = np.eye(self.dim)
        return np.column_stack([self.apply(eye[:, i]) for i in range(self.dim)])


class IdentityPreconditioner(Preconditioner):
    kind = PreconditionerKind.IDENTITY

    def apply(self, r: np.ndarray) -> np.ndarray:
        return np.array(r, dtype=float)


class ExactPreconditioner(Preconditioner):
    """M^{-1} = A^{-1} through the operator's cached factorization."""

    kind = PreconditionerKind.EXACT

    def __init__(self, operator: SparseOperator):
        super().__init__(operator)
        self._factor = operator.factorization()

    def apply(self, r: np.ndarray) -> np.ndarray:
        return self._factor.solve(r)
