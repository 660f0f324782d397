"""Structured grid hierarchy on the unit square and the regions built on it.

Fine and coarse meshes are uniform squares. Every region used by the solvers
(coarse blocks K, neighborhoods omega_i, their oversampled versions and the
overlapping subdomains D_j') is an axis-aligned box of fine cells, clipped to
the domain, so a region is fully described by its box and the sorted index
sets derived from it. Restriction and extension are index gathers/scatters
over those sets.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional

import numpy as np

from src.errors import GridError

logger = logging.getLogger(__name__)

Box = tuple[int, int, int, int]


class RegionKind(str, Enum):
    """What a region represents."""
    DOMAIN = "domain"
    COARSE_BLOCK = "coarse_block"
    NEIGHBORHOOD = "neighborhood"
    OVERSAMPLED_BLOCK = "oversampled_block"
    OVERSAMPLED_NEIGHBORHOOD = "oversampled_neighborhood"
    SUBDOMAIN = "subdomain"


class SubdomainMode(str, Enum):
    """Non-overlapping decomposition the subdomains D_j' are grown from."""
    COARSE_CELLS = "coarse_cells"
    NEIGHBORHOODS = "neighborhoods"


@dataclass(frozen=True)
class GridHierarchy:
    """Fine mesh of n_fine x n_fine cells nested in a coarse n_coarse x n_coarse mesh.

    Node (i, j) sits at (i*h, j*h) and has linear index j*(n_fine+1) + i;
    cell (i, j) is [i*h, (i+1)*h] x [j*h, (j+1)*h] with index j*n_fine + i.
    Coarse nodes and cells are indexed the same way with n_coarse.
    """
    n_fine: int
    n_coarse: int

    @property
    def ratio(self) -> int:
        return self.n_fine // self.n_coarse

    @property
    def h(self) -> float:
        return 1.0 / self.n_fine

    @property
    def H(self) -> float:
        return 1.0 / self.n_coarse

    @property
    def n_fine_nodes(self) -> int:
        return (self.n_fine + 1) ** 2

    @property
    def n_fine_cells(self) -> int:
        return self.n_fine ** 2

    @property
    def n_free(self) -> int:
        return (self.n_fine - 1) ** 2

    @property
    def n_coarse_nodes(self) -> int:
        return (self.n_coarse + 1) ** 2

    @property
    def n_coarse_cells(self) -> int:
        return self.n_coarse ** 2

    def node_index(self, i, j):
        return np.asarray(j) * (self.n_fine + 1) + np.asarray(i)

    def node_ij(self, index):
        return np.asarray(index) % (self.n_fine + 1), np.asarray(index) // (self.n_fine + 1)

    def cell_index(self, i, j):
        return np.asarray(j) * self.n_fine + np.asarray(i)

    def cell_ij(self, index):
        return np.asarray(index) % self.n_fine, np.asarray(index) // self.n_fine

    def coarse_node_index(self, i: int, j: int) -> int:
        return j * (self.n_coarse + 1) + i

    def coarse_node_ij(self, index: int) -> tuple[int, int]:
        return index % (self.n_coarse + 1), index // (self.n_coarse + 1)

    def coarse_cell_index(self, i: int, j: int) -> int:
        return j * self.n_coarse + i

    def coarse_cell_ij(self, index: int) -> tuple[int, int]:
        return index % self.n_coarse, index // self.n_coarse

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """(n_cells, 4) node indices per cell, counterclockwise from the lower-left corner."""
        i, j = self.cell_ij(np.arange(self.n_fine_cells))
        return np.stack([
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ], axis=1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """True at fine nodes on the Dirichlet boundary of the unit square."""
        i, j = self.node_ij(np.arange(self.n_fine_nodes))
        return (i == 0) | (j == 0) | (i == self.n_fine) | (j == self.n_fine)

    @cached_property
    def free_nodes(self) -> np.ndarray:
        """Sorted indices of the interior (free) fine nodes."""
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def free_index(self) -> np.ndarray:
        """Map from fine node index to free-dof index, -1 on the boundary."""
        index = np.full(self.n_fine_nodes, -1, dtype=np.int64)
        index[self.free_nodes] = np.arange(self.free_nodes.size)
        return index

    @cached_property
    def cell_to_coarse(self) -> np.ndarray:
        """Coarse cell index owning each fine cell."""
        i, j = self.cell_ij(np.arange(self.n_fine_cells))
        return (j // self.ratio) * self.n_coarse + (i // self.ratio)

    def node_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        i, j = self.node_ij(np.arange(self.n_fine_nodes))
        return i * self.h, j * self.h

    def cell_midpoints(self) -> tuple[np.ndarray, np.ndarray]:
        i, j = self.cell_ij(np.arange(self.n_fine_cells))
        return (i + 0.5) * self.h, (j + 0.5) * self.h


@dataclass(frozen=True, eq=False)
class Region:
    """A box of fine cells with its node sets.

    ``box`` is (x0, x1, y0, y1) in fine-cell units, half-open in cells.
    ``interior_nodes`` excludes the region boundary (and therefore the
    Dirichlet boundary); ``neumann_nodes`` excludes only the Dirichlet
    boundary of D.
    """
    kind: RegionKind
    box: Box
    cells: np.ndarray
    nodes: np.ndarray
    interior_nodes: np.ndarray
    neumann_nodes: np.ndarray
    anchor: int
    layers: int = 0
    coarse_box: Optional[Box] = None
    coarse_cells: Optional[np.ndarray] = None
    covers_domain: bool = False

    @property
    def touches_boundary(self) -> bool:
        return self.neumann_nodes.size != self.nodes.size

    @property
    def floating(self) -> bool:
        """True when the region does not touch the Dirichlet boundary."""
        return not self.touches_boundary


def _make_region(
    g: GridHierarchy,
    kind: RegionKind,
    box: Box,
    anchor: int,
    layers: int = 0,
    coarse_box: Optional[Box] = None,
) -> Region:
    x0, x1, y0, y1 = box
    ci, cj = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
    cells = g.cell_index(ci, cj).ravel()
    ni, nj = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
    nodes = g.node_index(ni, nj).ravel()
    inner = (ni > x0) & (ni < x1) & (nj > y0) & (nj < y1)
    interior = nodes[inner.ravel()]
    neumann = nodes[~g.boundary_mask[nodes]]
    covers = box == (0, g.n_fine, 0, g.n_fine)
    coarse_cells = None
    if coarse_box is not None:
        cx, cy = np.meshgrid(np.arange(coarse_box[0], coarse_box[1]), np.arange(coarse_box[2], coarse_box[3]))
        coarse_cells = np.sort((cy * g.n_coarse + cx).ravel())
    return Region(
        kind=kind,
        box=box,
        cells=np.sort(cells),
        nodes=np.sort(nodes),
        interior_nodes=np.sort(interior),
        neumann_nodes=np.sort(neumann),
        anchor=anchor,
        layers=layers,
        coarse_box=coarse_box,
        coarse_cells=coarse_cells,
        covers_domain=covers,
    )


def build_hierarchy(n_fine: int, n_coarse: int) -> GridHierarchy:
    """Build the nested fine/coarse grid pair on D = [0, 1]^2."""
    if int(n_fine) != n_fine or int(n_coarse) != n_coarse:
        raise GridError(f"grid sizes must be integers, got n_fine={n_fine}, n_coarse={n_coarse}")
    n_fine, n_coarse = int(n_fine), int(n_coarse)
    if n_fine < 1 or n_coarse < 1:
        raise GridError(f"grid sizes must be positive, got n_fine={n_fine}, n_coarse={n_coarse}")
    if n_coarse < 2:
        raise GridError(f"n_coarse must be at least 2 (got {n_coarse}): one coarse cell has no interior coarse node")
    if n_fine % n_coarse != 0:
        raise GridError(
            f"n_coarse={n_coarse} does not divide n_fine={n_fine}; the fine mesh must be nested in the coarse mesh"
        )
    return GridHierarchy(n_fine=n_fine, n_coarse=n_coarse)


def domain(g: GridHierarchy) -> Region:
    """The whole domain as a region."""
    return _make_region(g, RegionKind.DOMAIN, (0, g.n_fine, 0, g.n_fine), anchor=-1,
                        coarse_box=(0, g.n_coarse, 0, g.n_coarse))


def _coarse_to_fine(g: GridHierarchy, coarse_box: Box) -> Box:
    r = g.ratio
    return (coarse_box[0] * r, coarse_box[1] * r, coarse_box[2] * r, coarse_box[3] * r)


def coarse_block(g: GridHierarchy, coarse_cell: int) -> Region:
    """Coarse block K as a region."""
    if not 0 <= coarse_cell < g.n_coarse_cells:
        raise GridError(f"coarse cell {coarse_cell} out of range [0, {g.n_coarse_cells})")
    ci, cj = g.coarse_cell_ij(coarse_cell)
    cbox = (ci, ci + 1, cj, cj + 1)
    return _make_region(g, RegionKind.COARSE_BLOCK, _coarse_to_fine(g, cbox), coarse_cell, coarse_box=cbox)


def neighborhood(g: GridHierarchy, coarse_node: int) -> Region:
    """Union omega_i of the (at most four) coarse cells sharing coarse node x_i."""
    if not 0 <= coarse_node < g.n_coarse_nodes:
        raise GridError(f"coarse node {coarse_node} out of range [0, {g.n_coarse_nodes})")
    ci, cj = g.coarse_node_ij(coarse_node)
    cbox = (max(ci - 1, 0), min(ci + 1, g.n_coarse), max(cj - 1, 0), min(cj + 1, g.n_coarse))
    return _make_region(g, RegionKind.NEIGHBORHOOD, _coarse_to_fine(g, cbox), coarse_node, coarse_box=cbox)


_OVERSAMPLED = {
    RegionKind.COARSE_BLOCK: RegionKind.OVERSAMPLED_BLOCK,
    RegionKind.OVERSAMPLED_BLOCK: RegionKind.OVERSAMPLED_BLOCK,
    RegionKind.NEIGHBORHOOD: RegionKind.OVERSAMPLED_NEIGHBORHOOD,
    RegionKind.OVERSAMPLED_NEIGHBORHOOD: RegionKind.OVERSAMPLED_NEIGHBORHOOD,
}


def oversample(g: GridHierarchy, base: Region, layers: int) -> Region:
    """Grow a coarse block or neighborhood by ``layers`` rings of coarse cells.

    Each layer adds every coarse cell sharing a node with the current region
    (Moore growth), clipped to D.
    """
    if layers < 0:
        raise GridError(f"layers must be non-negative, got {layers}")
    if base.kind not in _OVERSAMPLED or base.coarse_box is None:
        raise GridError(f"cannot oversample a region of kind {base.kind.value}")
    if layers == 0:
        return base
    cx0, cx1, cy0, cy1 = base.coarse_box
    cbox = (
        max(cx0 - layers, 0),
        min(cx1 + layers, g.n_coarse),
        max(cy0 - layers, 0),
        min(cy1 + layers, g.n_coarse),
    )
    return _make_region(
        g, _OVERSAMPLED[base.kind], _coarse_to_fine(g, cbox), base.anchor,
        layers=base.layers + layers, coarse_box=cbox,
    )


def _grow_fine(g: GridHierarchy, box: Box, layers: int) -> Box:
    x0, x1, y0, y1 = box
    return (max(x0 - layers, 0), min(x1 + layers, g.n_fine), max(y0 - layers, 0), min(y1 + layers, g.n_fine))


def overlapping_decomposition(
    g: GridHierarchy,
    overlap_fine_layers: int,
    mode: SubdomainMode = SubdomainMode.COARSE_CELLS,
) -> list[Region]:
    """Overlapping subdomains D_j' grown by ``overlap_fine_layers`` fine cells.

    The overlap width is delta = overlap_fine_layers * h. With
    ``mode=neighborhoods`` the non-overlapping pieces are the omega_j
    themselves (D_j' = omega_j when the overlap is zero).
    """
    if overlap_fine_layers < 0:
        raise GridError(f"overlap must be non-negative, got {overlap_fine_layers}")
    mode = SubdomainMode(mode)
    bases = (
        [coarse_block(g, c) for c in range(g.n_coarse_cells)]
        if mode is SubdomainMode.COARSE_CELLS
        else [neighborhood(g, n) for n in range(g.n_coarse_nodes)]
    )
    subdomains = []
    for base in bases:
        box = _grow_fine(g, base.box, overlap_fine_layers)
        coarse_box = base.coarse_box if overlap_fine_layers == 0 else None
        subdomains.append(
            _make_region(g, RegionKind.SUBDOMAIN, box, base.anchor, layers=overlap_fine_layers, coarse_box=coarse_box)
        )
    covering = sum(region.covers_domain for region in subdomains)
    if covering:
        logger.info("%d of %d subdomains cover the whole domain", covering, len(subdomains))
    return subdomains
