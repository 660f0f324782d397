"""Preconditioned conjugate gradients with a Lanczos condition-number estimate."""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg

from src.errors import IndefiniteOperatorError
from src.fem.operators import SparseOperator
from src.precond.base import IdentityPreconditioner, Preconditioner

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAXIT = 500


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)
    lambda_min: float = 1.0
    lambda_max: float = 1.0
    wall_ms: float = 0.0

    @property
    def cond_estimate(self) -> float:
        if self.lambda_min <= 0.0:
            return float("inf")
        return self.lambda_max / self.lambda_min

    def to_dict(self) -> dict:
        data = asdict(self)
        data["cond_estimate"] = self.cond_estimate
        return data


def lanczos_extremes(alphas: list[float], betas: list[float]) -> tuple[float, float]:
    """Extremal eigenvalues of the Lanczos tridiagonal matrix built from CG coefficients."""
    if not alphas:
        return 1.0, 1.0
    a = np.asarray(alphas)
    if a.size == 1:
        return float(1.0 / a[0]), float(1.0 / a[0])
    b = np.asarray(betas[: a.size - 1])
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(b) / a[:-1]
    values = scipy.linalg.eigvalsh_tridiagonal(diag, off)
    return float(values[0]), float(values[-1])


def pcg(
    a: SparseOperator,
    b: np.ndarray,
    m: Optional[Union[Preconditioner, Callable[[np.ndarray], np.ndarray]]] = None,
    tol: float = DEFAULT_TOL,
    maxit: int = DEFAULT_MAXIT,
    x0: Optional[np.ndarray] = None,
    callback: Optional[Callable[[int, float], None]] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve A x = b by PCG, stopping when ||r_k|| / ||b|| <= tol.

    Args:
        a: SPD operator.
        b: Right-hand side.
        m: Preconditioner (defaults to the identity).
        tol: Relative residual tolerance.
        maxit: Iteration limit; reaching it returns converged=False.
        x0: Initial guess (zero by default).
        callback: Called as callback(iteration, relative_residual) after every step.

    Returns:
        The iterate and a SolveReport with the residual history and the
        Lanczos estimates of the extremal eigenvalues of M^{-1} A.
    """
    start = time.perf_counter()
    m = m if m is not None else IdentityPreconditioner(a)
    m_name = getattr(m, "name", "preconditioner")
    b = np.asarray(b, dtype=float)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros_like(b), SolveReport(0, True, [0.0], wall_ms=(time.perf_counter() - start) * 1e3)

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - a @ x
    residuals = [float(np.linalg.norm(r) / b_norm)]
    alphas: list[float] = []
    betas: list[float] = []
    converged = residuals[0] <= tol

    if not converged:
        z = m(r)
        rz = float(r @ z)
        if rz <= 0.0:
            raise IndefiniteOperatorError(f"{m_name} is not positive definite: r^T z = {rz:.3e}")
        p = z.copy()
        for iteration in range(1, maxit + 1):
            q = a @ p
            pq = float(p @ q)
            if pq <= 0.0:
                raise IndefiniteOperatorError(f"operator is not positive definite: p^T A p = {pq:.3e}")
            alpha = rz / pq
            alphas.append(alpha)
            x += alpha * p
            r -= alpha * q
            residual = float(np.linalg.norm(r) / b_norm)
            residuals.append(residual)
            if callback is not None:
                callback(iteration, residual)
            if residual <= tol:
                converged = True
                break
            z = m(r)
            rz_new = float(r @ z)
            if rz_new <= 0.0:
                raise IndefiniteOperatorError(f"{m_name} is not positive definite: r^T z = {rz_new:.3e}")
            beta = rz_new / rz
            betas.append(beta)
            p = z + beta * p
            rz = rz_new

    lam_min, lam_max = lanczos_extremes(alphas, betas)
    report = SolveReport(
        iterations=len(alphas),
        converged=converged,
        residuals=residuals,
        lambda_min=lam_min,
        lambda_max=lam_max,
        wall_ms=(time.perf_counter() - start) * 1e3,
    )
    if converged:
        logger.info("pcg (%s): converged in %d iterations, cond ~ %.4g", m_name, report.iterations, report.cond_estimate)
    else:
        logger.warning("pcg (%s): no convergence in %d iterations, residual %.3e", m_name, maxit, residuals[-1])
    return x, report
