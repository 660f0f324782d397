"""Spectral coarse spaces built from local generalized eigenproblems on the omega_i."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from src.coeff.field import CoefficientField
from src.coarse.pou import PartitionOfUnity
from src.fem.assembly import BoundaryCondition, assemble_stiffness, assemble_weighted_mass, build_weight
from src.fem.operators import SparseOperator
from src.fem.solvers import EigenPairs, dense_generalized_eig
from src.grid.hierarchy import GridHierarchy, Region, neighborhood

logger = logging.getLogger(__name__)


class SpectralVariant(str, Enum):
    KAPPA_MASS = "kappa_mass"
    MS_MASS = "ms_mass"
    GMSFEM = "gmsfem"
    POU = "pou"


class SelectionMode(str, Enum):
    FIXED = "fixed"
    THRESHOLD = "threshold"
    GAP = "gap"


@dataclass(frozen=True)
class Selection:
    """How many local eigenvectors each region contributes.

    ``fixed`` takes ``count``; ``threshold`` takes every eigenvalue below
    ``threshold`` (raw units of the local quotient); ``gap`` stops after the
    last index whose successor is ``gap_ratio`` times larger. The adaptive
    modes never take more than ``max_count``.
    """
    mode: SelectionMode = SelectionMode.FIXED
    count: int = 3
    threshold: float = 0.0
    gap_ratio: float = 10.0
    max_count: int = 8

    def __post_init__(self):
        object.__setattr__(self, "mode", SelectionMode(self.mode))
        if self.count < 0 or self.max_count < 1:
            raise ValueError(f"selection counts must be non-negative, got count={self.count}, max_count={self.max_count}")
        if self.gap_ratio <= 1.0:
            raise ValueError(f"gap_ratio must exceed 1, got {self.gap_ratio}")

    @property
    def candidates(self) -> int:
        """Eigenpairs to compute: the largest possible count plus the first excluded one."""
        return (self.count if self.mode is SelectionMode.FIXED else self.max_count) + 1

    def choose(self, values: np.ndarray) -> int:
        if self.mode is SelectionMode.FIXED:
            return min(self.count, values.size)
        head = values[: self.max_count + 1]
        if self.mode is SelectionMode.THRESHOLD:
            return int(np.count_nonzero(head[: self.max_count] < self.threshold))
        chosen = 0
        for k in range(1, head.size):
            if head[k] > self.gap_ratio * max(head[k - 1], 0.0):
                chosen = k
        return min(chosen, self.max_count)


@dataclass(frozen=True, eq=False)
class RegionSpectrum:
    """Eigen-data of one region: computed eigenvalues, kept count, first excluded eigenvalue."""
    region_id: int
    eigenvalues: np.ndarray
    count: int

    @property
    def next_eigenvalue(self) -> float:
        if self.count < self.eigenvalues.size:
            return float(self.eigenvalues[self.count])
        return float("inf")


@dataclass(eq=False)
class SpectralCoarseSpace:
    """Coarse basis on the free fine dofs (one column per function) plus its spectra."""
    variant: str
    basis: sp.csc_matrix
    regions: list[RegionSpectrum]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def counts(self) -> list[int]:
        return [region.count for region in self.regions]

    @property
    def eigenvalues(self) -> list[np.ndarray]:
        return [region.eigenvalues for region in self.regions]

    @property
    def min_excluded_eigenvalue(self) -> float:
        """Lambda = min over regions of the first eigenvalue not kept."""
        if not self.regions:
            return float("inf")
        return min(region.next_eigenvalue for region in self.regions)


def local_operators(
    g: GridHierarchy,
    field: CoefficientField,
    region: Region,
    mass_weight,
) -> tuple[SparseOperator, SparseOperator]:
    """Stiffness and weighted mass on ``region``: Neumann inside D, Dirichlet on its boundary."""
    a = assemble_stiffness(g, field, region, BoundaryCondition.MIXED)
    b = assemble_weighted_mass(g, mass_weight, region, BoundaryCondition.MIXED)
    return a, b


def select_count(selection: Selection, pairs: EigenPairs, region: Region, label: str) -> int:
    """Apply the selection rule, keeping the constant mode on floating regions."""
    count = selection.choose(pairs.values)
    if count == 0 and region.floating and len(pairs):
        logger.warning("%s %d: selection kept no eigenvector on a floating region, keeping 1", label, region.anchor)
        count = 1
    return count


def scatter_columns(g: GridHierarchy, nodes: np.ndarray, local: np.ndarray) -> sp.csc_matrix:
    """Place local nodal columns into the free-dof numbering, dropping Dirichlet nodes."""
    rows = g.free_index[nodes]
    keep = rows >= 0
    local = np.asarray(local)[keep]
    return sp.csc_matrix(
        (local.ravel(order="F"), (np.tile(rows[keep], local.shape[1]), np.repeat(np.arange(local.shape[1]), keep.sum()))),
        shape=(g.n_free, local.shape[1]),
    )


def _stack(g: GridHierarchy, blocks: list[sp.csc_matrix]) -> sp.csc_matrix:
    if not blocks:
        return sp.csc_matrix((g.n_free, 0))
    return sp.hstack(blocks, format="csc")


def run_regions(fn: Callable[[int], object], count: int, jobs: int = 1) -> list:
    """Map ``fn`` over region indices, results in region order."""
    if jobs <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(count)))


def neighborhood_space(
    g: GridHierarchy,
    field: CoefficientField,
    pou: PartitionOfUnity,
    mass_weight,
    selection: Selection,
    variant: str,
    reduce: Optional[Callable[[int], Optional[np.ndarray]]] = None,
    jobs: int = 1,
) -> SpectralCoarseSpace:
    """Shared construction of chi_i * psi_j over every neighborhood omega_i.

    ``reduce(i)`` may return an orthonormal local basis W_i; the eigenproblem
    is then posed on span(W_i) and its eigenvectors lifted back.
    """

    def build(i: int) -> tuple[RegionSpectrum, sp.csc_matrix]:
        region = neighborhood(g, i)
        a, b = local_operators(g, field, region, mass_weight)
        w = reduce(i) if reduce is not None else None
        if w is None:
            pairs = dense_generalized_eig(a, b, selection.candidates)
            vectors = pairs.vectors
        else:
            pairs = dense_generalized_eig(w.T @ (a @ w), w.T @ (b @ w), selection.candidates)
            vectors = w @ pairs.vectors
        count = select_count(selection, pairs, region, "neighborhood")
        logger.debug("neighborhood %d: eigenvalues %s, keeping %d", i, np.array2string(pairs.values, precision=3), count)
        chi = pou.chi(i)[a.nodes]
        columns = scatter_columns(g, a.nodes, chi[:, None] * vectors[:, :count])
        return RegionSpectrum(i, pairs.values, count), columns

    results = run_regions(build, g.n_coarse_nodes, jobs)
    space = SpectralCoarseSpace(variant, _stack(g, [cols for _, cols in results]), [spec for spec, _ in results])
    logger.info(
        "%s coarse space: dim=%d over %d neighborhoods, Lambda=%.4g",
        variant, space.dim, len(space.regions), space.min_excluded_eigenvalue,
    )
    return space


def build_spectral_space(
    g: GridHierarchy,
    field: CoefficientField,
    pou: PartitionOfUnity,
    variant: SpectralVariant | str = SpectralVariant.KAPPA_MASS,
    selection: Optional[Selection] = None,
    jobs: int = 1,
) -> SpectralCoarseSpace:
    """Coarse space from the lowest eigenvectors of a(u, v) = lambda m(u, v) on each omega_i.

    The mass weight is kappa (``kappa_mass``) or kappa-hat (``ms_mass``).
    """
    variant = SpectralVariant(variant)
    if variant not in (SpectralVariant.KAPPA_MASS, SpectralVariant.MS_MASS):
        raise ValueError(f"build_spectral_space handles kappa_mass and ms_mass, got {variant.value}")
    weight = field if variant is SpectralVariant.KAPPA_MASS else build_weight(g, field, pou)
    return neighborhood_space(g, field, pou, weight, selection or Selection(), variant.value, jobs=jobs)


def build_pou_space(g: GridHierarchy, pou: PartitionOfUnity) -> SpectralCoarseSpace:
    """The chi_i alone, one coarse function per coarse node (all-zero columns dropped)."""
    basis = pou.matrix.tocsr()[g.free_nodes].tocsc()
    keep = np.flatnonzero(np.diff(basis.indptr) > 0)
    basis = basis[:, keep]
    regions = [RegionSpectrum(int(i), np.zeros(0), 1) for i in keep]
    logger.info("pou coarse space: dim=%d", basis.shape[1])
    return SpectralCoarseSpace(SpectralVariant.POU.value, basis, regions)
