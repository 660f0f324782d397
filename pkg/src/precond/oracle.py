"""Dense condition number of M^{-1} A for small problems."""

from typing import Callable, Union

import numpy as np
import scipy.linalg

from src.fem.operators import SparseOperator
from src.precond.base import Preconditioner

MAX_ORACLE_DIMENSION = 2500


def dense_cond_oracle(
    a: Union[SparseOperator, np.ndarray],
    m: Union[Preconditioner, Callable[[np.ndarray], np.ndarray], np.ndarray],
) -> float:
    """lambda_max / lambda_min of M^{-1} A.

    M^{-1} is materialized column by column; the eigenvalues come from the
    symmetric pencil (A M^{-1} A, A), which has the spectrum of M^{-1} A.
    """
    a = a.to_dense() if isinstance(a, SparseOperator) else np.asarray(a, dtype=float)
    n = a.shape[0]
    if n > MAX_ORACLE_DIMENSION:
        raise ValueError(f"oracle dimension {n} exceeds {MAX_ORACLE_DIMENSION}")
    if isinstance(m, Preconditioner):
        p = m.to_dense()
    elif callable(m):
        eye = np.eye(n)
        p = np.column_stack([m(eye[:, i]) for i in range(n)])
    else:
        p = np.asarray(m, dtype=float)
    x = a @ p @ a
    values = scipy.linalg.eigh(0.5 * (x + x.T), 0.5 * (a + a.T), eigvals_only=True)
    return float(values[-1] / values[0])
