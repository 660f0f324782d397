"""Partition of unity subordinated to the coarse mesh."""

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from src.grid.hierarchy import GridHierarchy


class PouKind(str, Enum):
    BILINEAR_HAT = "bilinear_hat"


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """chi_i for every coarse node i, as the columns of a fine-node x coarse-node matrix."""
    matrix: sp.csc_matrix
    kind: PouKind = PouKind.BILINEAR_HAT

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    def chi(self, i: int) -> np.ndarray:
        """chi_i at all fine nodes."""
        return self.matrix[:, i].toarray().ravel()

    def support(self, i: int) -> np.ndarray:
        """Fine nodes where chi_i is non-zero."""
        column = self.matrix[:, i]
        return np.sort(column.indices[column.data != 0.0])

    def total(self) -> np.ndarray:
        """Sum of all chi_i at each fine node."""
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def _hat_1d(n_fine: int, n_coarse: int) -> sp.csr_matrix:
    r = n_fine // n_coarse
    i = np.arange(n_fine + 1)
    left = i // r
    s = (i % r) / r
    rows = np.concatenate([i, i[s > 0.0]])
    cols = np.concatenate([left, left[s > 0.0] + 1])
    vals = np.concatenate([1.0 - s, s[s > 0.0]])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_fine + 1, n_coarse + 1))


def build_pou(g: GridHierarchy, kind: PouKind | str = PouKind.BILINEAR_HAT) -> PartitionOfUnity:
    """Coarse Q1 hats interpolated at the fine nodes.

    Node (i, j) has index j*(n+1) + i in both meshes, so the 2D hat matrix is
    the Kronecker product of the 1D one with itself (y factor first).
    """
    kind = PouKind(kind)
    hat = _hat_1d(g.n_fine, g.n_coarse)
    return PartitionOfUnity(sp.kron(hat, hat, format="csc"), kind)
