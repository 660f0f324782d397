"""Randomized snapshot spaces and the GMsFEM coarse space posed on them."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from src.coeff.field import CoefficientField
from src.coarse.pou import PartitionOfUnity
from src.coarse.spectral import (
    Selection,
    SpectralCoarseSpace,
    SpectralVariant,
    neighborhood_space,
    run_regions,
)
from src.fem.assembly import BoundaryCondition, assemble_load, assemble_stiffness, build_weight, region_nodes
from src.fem.solvers import factor_solve
from src.grid.hierarchy import GridHierarchy, Region, neighborhood

logger = logging.getLogger(__name__)

DROP_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class LocalSnapshots:
    """Orthonormal basis of W_i over the unknowns of omega_i; ``basis=None`` is the whole local space."""
    region_id: int
    nodes: np.ndarray
    basis: Optional[np.ndarray]

    @property
    def dim(self) -> int:
        return self.nodes.size if self.basis is None else self.basis.shape[1]


@dataclass(frozen=True, eq=False)
class SnapshotSpace:
    """Snapshot spaces W_i for every neighborhood; ``samples=None`` means no reduction."""
    samples: Optional[int]
    seed: int
    regions: list[LocalSnapshots]

    @property
    def dims(self) -> list[int]:
        return [local.dim for local in self.regions]

    @classmethod
    def full(cls, g: GridHierarchy) -> "SnapshotSpace":
        regions = []
        for i in range(g.n_coarse_nodes):
            region = neighborhood(g, i)
            regions.append(LocalSnapshots(i, region_nodes(region, BoundaryCondition.MIXED), None))
        return cls(None, 0, regions)


def random_forcing(region: Region, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Per-cell uniform(-1, 1) forcings shifted to zero mean over the region, one column per sample."""
    f = rng.uniform(-1.0, 1.0, size=(region.cells.size, samples))
    return f - f.mean(axis=0)


def build_snapshot_space(
    g: GridHierarchy,
    field: CoefficientField,
    region: Region,
    samples: int,
    seed: int = 0,
) -> LocalSnapshots:
    """W_i = span{u_1, ..., u_M} + constants from M random local solves.

    Each u_l solves -div(kappa grad u) = f_l on the region with natural
    conditions inside D, and is normalized to zero mean. The result is
    orthonormalized by a pivoted QR and directions below DROP_TOLERANCE
    (relative to the leading one) are dropped.
    """
    if samples < 0:
        raise ValueError(f"snapshot count must be non-negative, got {samples}")
    nodes = region_nodes(region, BoundaryCondition.MIXED)
    ones = np.ones((nodes.size, 1))
    if samples == 0:
        return LocalSnapshots(region.anchor, nodes, ones / np.sqrt(nodes.size))

    rng = np.random.default_rng([seed, region.anchor])
    forcing = random_forcing(region, samples, rng)
    loads = np.empty((nodes.size, samples))
    cell_f = np.zeros(g.n_fine_cells)
    for m in range(samples):
        cell_f[region.cells] = forcing[:, m]
        loads[:, m] = assemble_load(g, cell_f, region, BoundaryCondition.MIXED)

    a = assemble_stiffness(g, field, region, BoundaryCondition.MIXED)
    u = factor_solve(a, loads)
    u = u - u.mean(axis=0)

    w = np.hstack([ones, u])
    norms = np.linalg.norm(w, axis=0)
    w = w[:, norms > 0.0] / norms[norms > 0.0]
    q, r, _ = scipy.linalg.qr(w, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    keep = diag > DROP_TOLERANCE * diag[0]
    if not keep.all():
        logger.debug("neighborhood %d: dropped %d dependent snapshots", region.anchor, int((~keep).sum()))
    return LocalSnapshots(region.anchor, nodes, q[:, keep])


def build_snapshot_spaces(
    g: GridHierarchy,
    field: CoefficientField,
    samples: int,
    seed: int = 0,
    jobs: int = 1,
) -> SnapshotSpace:
    """Snapshot spaces on every neighborhood omega_i."""
    regions = run_regions(
        lambda i: build_snapshot_space(g, field, neighborhood(g, i), samples, seed), g.n_coarse_nodes, jobs
    )
    logger.info("snapshot spaces: M=%d, dims %d..%d", samples, min(local.dim for local in regions), max(local.dim for local in regions))
    return SnapshotSpace(samples, seed, regions)


def build_gmsfem_space(
    g: GridHierarchy,
    field: CoefficientField,
    pou: PartitionOfUnity,
    snapshots: SnapshotSpace,
    selection: Optional[Selection] = None,
    mass: SpectralVariant | str = SpectralVariant.KAPPA_MASS,
    jobs: int = 1,
) -> SpectralCoarseSpace:
    """Spectral space with the local eigenproblem restricted to the snapshot spaces W_i.

    ``mass`` picks the weight of the reduced mass matrix (kappa or kappa-hat).
    """
    mass = SpectralVariant(mass)
    if mass not in (SpectralVariant.KAPPA_MASS, SpectralVariant.MS_MASS):
        raise ValueError(f"gmsfem mass must be kappa_mass or ms_mass, got {mass.value}")
    if len(snapshots.regions) != g.n_coarse_nodes:
        raise ValueError(f"snapshot space has {len(snapshots.regions)} regions, grid has {g.n_coarse_nodes} coarse nodes")
    weight = field if mass is SpectralVariant.KAPPA_MASS else build_weight(g, field, pou)
    return neighborhood_space(
        g, field, pou, weight, selection or Selection(), SpectralVariant.GMSFEM.value,
        reduce=lambda i: snapshots.regions[i].basis, jobs=jobs,
    )
