"""Q1 finite-element assembly on the uniform fine mesh.

Element integrals use one value of kappa (or of the weight) per fine cell,
which is exact for piecewise-constant data. Local node numbering is
counterclockwise from the lower-left corner, matching GridHierarchy.cell_nodes.
"""

from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from src.coeff.field import CoefficientField
from src.fem.operators import SparseOperator, WeightField
from src.grid.hierarchy import GridHierarchy, Region, domain

# Q1 Laplacian on a square; independent of the side length in 2D
STIFFNESS_ELEMENT = np.array([
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
]) / 6.0

# Q1 mass on the unit square; scaled by h^2
MASS_ELEMENT = np.array([
    [4.0, 2.0, 1.0, 2.0],
    [2.0, 4.0, 2.0, 1.0],
    [1.0, 2.0, 4.0, 2.0],
    [2.0, 1.0, 2.0, 4.0],
]) / 36.0


class BoundaryCondition(str, Enum):
    """Which region nodes carry unknowns."""
    DIRICHLET = "dirichlet_eliminated"
    NEUMANN = "neumann"
    MIXED = "mixed"


def region_nodes(region: Region, bc: BoundaryCondition) -> np.ndarray:
    """Global node indices kept as unknowns on ``region`` under ``bc``."""
    bc = BoundaryCondition(bc)
    if bc is BoundaryCondition.DIRICHLET:
        return region.interior_nodes
    if bc is BoundaryCondition.NEUMANN:
        return region.nodes
    return region.neumann_nodes


def _assemble(
    g: GridHierarchy,
    cell_weights: np.ndarray,
    element: np.ndarray,
    region: Optional[Region],
    bc: BoundaryCondition,
    label: str,
) -> SparseOperator:
    region = region if region is not None else domain(g)
    nodes = region_nodes(region, bc)
    local = np.full(g.n_fine_nodes, -1, dtype=np.int64)
    local[nodes] = np.arange(nodes.size)

    cells = region.cells[cell_weights[region.cells] != 0.0]
    conn = local[g.cell_nodes[cells]]
    rows = np.broadcast_to(conn[:, :, None], (cells.size, 4, 4))
    cols = np.broadcast_to(conn[:, None, :], (cells.size, 4, 4))
    vals = cell_weights[cells][:, None, None] * element[None, :, :]
    keep = (rows >= 0) & (cols >= 0)

    matrix = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(nodes.size, nodes.size)).tocsr()
    matrix = (0.5 * (matrix + matrix.T)).tocsr()
    matrix.sum_duplicates()
    return SparseOperator(matrix, nodes=nodes, label=label)


def _cell_values(field: Union[CoefficientField, np.ndarray, float], g: GridHierarchy) -> np.ndarray:
    if isinstance(field, CoefficientField):
        return field.values
    if isinstance(field, WeightField):
        return field.values
    values = np.asarray(field, dtype=float)
    if values.ndim == 0:
        return np.full(g.n_fine_cells, float(values))
    return values.ravel()


def assemble_stiffness(
    g: GridHierarchy,
    field: Union[CoefficientField, np.ndarray, float],
    region: Optional[Region] = None,
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET,
) -> SparseOperator:
    """Stiffness matrix of a(u, v) = sum over cells of kappa * grad u . grad v on ``region``."""
    return _assemble(g, _cell_values(field, g), STIFFNESS_ELEMENT, region, BoundaryCondition(bc), "stiffness")


def assemble_weighted_mass(
    g: GridHierarchy,
    w: Union[WeightField, CoefficientField, np.ndarray, float],
    region: Optional[Region] = None,
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET,
) -> SparseOperator:
    """Mass matrix of m(u, v) = sum over cells of w * u * v on ``region``."""
    return _assemble(g, _cell_values(w, g), MASS_ELEMENT * g.h ** 2, region, BoundaryCondition(bc), "mass")


def build_weight(g: GridHierarchy, field: CoefficientField, pou) -> WeightField:
    """kappa-hat = kappa * sum_j |grad chi_j|^2 evaluated at fine-cell midpoints.

    ``pou`` is a PartitionOfUnity; the gradient of each chi_j is taken from its
    fine-grid Q1 interpolant, exact for coarse bilinear hats.
    """
    chi = pou.matrix.tocsr()
    corners = g.cell_nodes
    c0, c1, c2, c3 = (chi[corners[:, k]] for k in range(4))
    gx = (c1 - c0 + c2 - c3) / (2.0 * g.h)
    gy = (c3 - c0 + c2 - c1) / (2.0 * g.h)
    grad_sq = np.asarray((gx.multiply(gx) + gy.multiply(gy)).sum(axis=1)).ravel()
    return WeightField(field.values * grad_sq)


def assemble_load(
    g: GridHierarchy,
    f: Union[float, np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]],
    region: Optional[Region] = None,
    bc: Optional[BoundaryCondition] = None,
) -> np.ndarray:
    """Q1 load vector of f.

    ``f`` is a constant, a callable of (x, y) sampled at cell midpoints, a
    per-cell array, or a per-node array (integrated with the mass matrix).
    Without ``bc`` the result is indexed by all fine nodes; with ``bc`` it is
    restricted to the unknowns of ``region`` under that condition.
    """
    region = region if region is not None else domain(g)
    if callable(f):
        x, y = g.cell_midpoints()
        f = np.asarray(f(x, y), dtype=float)
    values = np.asarray(f, dtype=float)

    if values.ndim == 0 or values.size == g.n_fine_cells:
        cell_f = np.broadcast_to(values, (g.n_fine_cells,)) if values.ndim == 0 else values.ravel()
        cells = region.cells
        load = np.bincount(
            g.cell_nodes[cells].ravel(),
            weights=np.repeat(cell_f[cells] * g.h ** 2 / 4.0, 4),
            minlength=g.n_fine_nodes,
        )
    elif values.size == g.n_fine_nodes:
        mass = assemble_weighted_mass(g, 1.0, region, BoundaryCondition.NEUMANN)
        load = np.zeros(g.n_fine_nodes)
        load[mass.nodes] = mass @ values.ravel()[mass.nodes]
    else:
        raise ValueError(
            f"load data has {values.size} values; expected a scalar, {g.n_fine_cells} cell or {g.n_fine_nodes} node values"
        )

    if bc is None:
        return load
    return load[region_nodes(region, BoundaryCondition(bc))]
