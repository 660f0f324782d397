"""Sparse symmetric operators and per-cell weight fields."""

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

if TYPE_CHECKING:
    from src.fem.solvers import Factorization


@dataclass(eq=False)
class SparseOperator:
    """A symmetric sparse matrix together with the fine nodes its rows refer to.

    The factorization is built on first use under a lock, so an operator can
    be shared between threads once constructed.
    """
    matrix: sp.csr_matrix
    nodes: Optional[np.ndarray] = None
    label: str = ""
    _factor: Optional["Factorization"] = field(default=None, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix, dtype=float)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError(f"operator must be square, got shape {self.matrix.shape}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other):
        return self.matrix @ other

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def submatrix(self, index: np.ndarray, label: str = "") -> "SparseOperator":
        """Principal submatrix on ``index`` (restriction R A R^T)."""
        nodes = None if self.nodes is None else self.nodes[index]
        return SparseOperator(self.matrix[index][:, index], nodes=nodes, label=label or self.label)

    def factorization(self) -> "Factorization":
        from src.fem.solvers import Factorization

        with self._lock:
            if self._factor is None:
                self._factor = Factorization(self.matrix)
            return self._factor

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.factorization().solve(rhs)

    def export_matrix_market(self, path: str | Path) -> Path:
        """Write the matrix in Matrix Market coordinate format."""
        path = Path(path)
        scipy.io.mmwrite(str(path), self.matrix.tocoo(), comment=self.label, symmetry="symmetric")
        return path if path.suffix else path.with_suffix(".mtx")


@dataclass(frozen=True, eq=False)
class WeightField:
    """Non-negative per-fine-cell weight (the kappa-hat of the multiscale mass)."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if np.any(values < 0.0) or not np.all(np.isfinite(values)):
            raise ValueError("weights must be finite and non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
