"""Hybrid preconditioner built on the constrained energy minimizing coarse space.

M^{-1} = A_0^{-1} + (I - A_0^{-1} A) B (I - A A_0^{-1}), where A_0^{-1} is the
Galerkin coarse solve in V_ms and B sums the penalized local solves on the
oversampled neighborhoods omega_i^+.
"""

import logging
import threading
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from src.coeff.field import CoefficientField
from src.coarse.cem import CemCoarseSpace, penalized_local_solver
from src.coarse.pou import PartitionOfUnity, build_pou
from src.coarse.spectral import run_regions
from src.errors import GridError
from src.fem.assembly import assemble_stiffness
from src.fem.operators import SparseOperator
from src.fem.solvers import PenalizedSolver
from src.grid.hierarchy import GridHierarchy, neighborhood, oversample
from src.precond.base import Preconditioner, PreconditionerKind
from src.precond.schwarz import CoarseCorrection, galerkin_operator
from src.settings import factor_cache_bytes

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class PenalizedLocalSolve:
    """Local solve on omega_i^+ with the chi_i-weighted right-hand side applied on both sides.

    ``solver`` is None when the factorization did not fit the cache; it is
    then rebuilt by ``factory`` on every application and dropped afterwards.
    """
    index: np.ndarray
    chi: np.ndarray
    factory: Callable[[], PenalizedSolver]
    solver: Optional[PenalizedSolver] = None

    @property
    def cached(self) -> bool:
        return self.solver is not None

    def apply(self, r: np.ndarray) -> np.ndarray:
        solver = self.solver if self.solver is not None else self.factory()
        local = r[self.index]
        return 0.5 * (solver.solve(self.chi * local) + self.chi * solver.solve(local))


class HybridCem(Preconditioner):
    kind = PreconditionerKind.HYBRID_CEM

    def __init__(
        self,
        operator: SparseOperator,
        coarse: CoarseCorrection,
        locals_: list[PenalizedLocalSolve],
        layers: int,
    ):
        super().__init__(operator)
        self.coarse = coarse
        self.locals = locals_
        self.layers = layers

    @property
    def coarse_dim(self) -> int:
        return self.coarse.dim

    @property
    def cached_solvers(self) -> int:
        return sum(local.cached for local in self.locals)

    def local_sum(self, r: np.ndarray) -> np.ndarray:
        z = np.zeros_like(r, dtype=float)
        for local in self.locals:
            z[local.index] += local.apply(r)
        return z

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        z0 = self.coarse.apply(r)
        w = self.local_sum(r - self.operator @ z0)
        return z0 + w - self.coarse.apply(self.operator @ w)


class _FactorCache:
    """Byte budget shared by the local solvers built for one preconditioner."""

    def __init__(self, budget: int):
        self.budget = budget
        self.used = 0
        self._lock = threading.Lock()

    def admit(self, solver: PenalizedSolver) -> bool:
        with self._lock:
            if self.used + solver.nbytes > self.budget:
                return False
            self.used += solver.nbytes
            return True


def hybrid_cem(
    g: GridHierarchy,
    field: CoefficientField,
    cem: CemCoarseSpace,
    layers: Optional[int] = None,
    pou: Optional[PartitionOfUnity] = None,
    operator: Optional[SparseOperator] = None,
    coarse_kappa: bool = True,
    jobs: int = 1,
    cache_bytes: Optional[int] = None,
) -> HybridCem:
    """Hybrid preconditioner with local problems on omega_i^+ grown by ``layers`` coarse layers.

    ``coarse_kappa=False`` builds the coarse solve from the unweighted
    Laplacian instead of the kappa-weighted operator. Local factorizations
    are kept while their total size stays within ``cache_bytes`` (default
    ``HCDD_FACTOR_CACHE_MB``); the others are refactored on each application.
    """
    layers = cem.layers if layers is None else layers
    if layers < 1:
        raise GridError(f"hybrid preconditioner needs at least one oversampling layer, got {layers}")
    if layers != cem.layers:
        logger.warning("local layers k=%d differ from the coarse basis layers l=%d", layers, cem.layers)

    pou = pou if pou is not None else build_pou(g)
    operator = operator if operator is not None else assemble_stiffness(g, field)
    coarse_form = operator if coarse_kappa else assemble_stiffness(g, 1.0)
    coarse = CoarseCorrection(cem.basis, galerkin_operator(coarse_form, cem.basis))
    constraint = cem.aux.constraint.tocsr()
    cache = _FactorCache(factor_cache_bytes() if cache_bytes is None else cache_bytes)

    def build(i: int) -> Optional[PenalizedLocalSolve]:
        region = oversample(g, neighborhood(g, i), layers)
        index = g.free_index[region.interior_nodes]
        chi = pou.chi(i)[region.interior_nodes]
        if not np.any(chi):
            return None
        factory = partial(_local_solver, operator, constraint, index)
        solver = factory()
        return PenalizedLocalSolve(index, chi, factory, solver if cache.admit(solver) else None)

    locals_ = [local for local in run_regions(build, g.n_coarse_nodes, jobs) if local is not None]
    m = HybridCem(operator, coarse, locals_, layers)
    if m.cached_solvers < len(locals_):
        logger.warning(
            "hybrid preconditioner: %d of %d local factorizations exceed the %.0f MB cache and are rebuilt per application",
            len(locals_) - m.cached_solvers, len(locals_), cache.budget / 2 ** 20,
        )
    logger.info(
        "hybrid preconditioner: %d local solvers (%.0f MB kept), k=%d, coarse dim %d",
        len(locals_), cache.used / 2 ** 20, layers, coarse.dim,
    )
    return m


def _local_solver(operator: SparseOperator, constraint: sp.csr_matrix, index: np.ndarray) -> PenalizedSolver:
    solver, _ = penalized_local_solver(operator, constraint, index)
    return solver
