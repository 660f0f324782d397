"""High-contrast coefficient fields: generators, validation and CSV storage."""

import csv
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np

from src.errors import CoefficientError
from src.grid.hierarchy import GridHierarchy

logger = logging.getLogger(__name__)

CHANNEL_ATTEMPTS = 200


class Pattern(str, Enum):
    """Coefficient archetypes."""
    CONSTANT = "constant"
    INTERIOR_INCLUSIONS = "interior_inclusions"
    BOUNDARY_INCLUSIONS = "boundary_inclusions"
    CHANNELS = "channels"
    BINARY_MASK = "binary_mask"


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Piecewise-constant kappa, one value per fine cell (index j*n_fine + i)."""
    values: np.ndarray
    n_fine: int
    pattern: str = "custom"
    seed: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size != self.n_fine ** 2:
            raise CoefficientError(
                f"coefficient has {values.size} values, expected {self.n_fine ** 2} for n_fine={self.n_fine}"
            )
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise CoefficientError("coefficient values must be finite and strictly positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def kappa_min(self) -> float:
        return float(self.values.min())

    @property
    def kappa_max(self) -> float:
        return float(self.values.max())

    @property
    def eta(self) -> float:
        """Contrast kappa_max / kappa_min."""
        return self.kappa_max / self.kappa_min

    def as_grid(self) -> np.ndarray:
        """Values as an (n_fine, n_fine) array, row index = y index."""
        return self.values.reshape(self.n_fine, self.n_fine)

    def feature_mask(self) -> np.ndarray:
        """Cells carrying more than the minimum value, as an (n_fine, n_fine) array."""
        return self.as_grid() > self.kappa_min

    def scaled(self, factor: float) -> "CoefficientField":
        return CoefficientField(self.values * factor, self.n_fine, self.pattern, self.seed)

    def sidecar(self) -> dict[str, Any]:
        return {"n_fine": self.n_fine, "pattern": self.pattern, "eta": self.eta, "seed": self.seed}


def generate(
    g: GridHierarchy,
    pattern: str | Pattern,
    eta: float = 1.0,
    seed: int = 0,
    params: Optional[dict[str, Any]] = None,
) -> CoefficientField:
    """Generate a coefficient with background 1 and features of value eta.

    Args:
        g: Grid hierarchy the field lives on.
        pattern: One of the Pattern values.
        eta: Feature value (the contrast of binary patterns).
        seed: Seed of the placement generator.
        params: Pattern parameters (sizes, counts, widths, a mask).

    Returns:
        The generated field; a pure function of the arguments.
    """
    try:
        pattern = Pattern(pattern)
    except ValueError:
        raise CoefficientError(f"unknown coefficient pattern '{pattern}'") from None
    if not eta >= 1.0:
        raise CoefficientError(f"contrast eta must be >= 1, got {eta}")
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    n = g.n_fine

    if pattern is Pattern.CONSTANT:
        value = float(params.pop("value", 1.0))
        _reject_unknown(pattern, params)
        return CoefficientField(np.full(n * n, value), n, pattern.value, seed)

    if pattern is Pattern.INTERIOR_INCLUSIONS:
        mask = _interior_inclusions(g, rng, params)
    elif pattern is Pattern.BOUNDARY_INCLUSIONS:
        mask = _boundary_inclusions(g, rng, params)
    elif pattern is Pattern.CHANNELS:
        mask = _channels(g, rng, params)
    else:
        mask = _binary_mask(g, params)
    _reject_unknown(pattern, params)

    field = CoefficientField(np.where(mask, eta, 1.0).ravel(), n, pattern.value, seed)
    logger.debug("generated %s coefficient: %d feature cells, eta=%g", pattern.value, int(mask.sum()), eta)
    return field


def _reject_unknown(pattern: Pattern, params: dict[str, Any]) -> None:
    if params:
        raise CoefficientError(f"unknown parameters for pattern {pattern.value}: {sorted(params)}")


def _interior_inclusions(g: GridHierarchy, rng: np.random.Generator, params: dict[str, Any]) -> np.ndarray:
    r = g.ratio
    size = int(params.pop("size", max(1, r // 3)))
    if size < 1 or size > r - 2:
        raise CoefficientError(
            f"inclusion size {size} does not fit strictly inside a coarse cell of {r} fine cells"
        )
    mask = np.zeros((g.n_fine, g.n_fine), dtype=bool)
    for cj in range(g.n_coarse):
        for ci in range(g.n_coarse):
            ox, oy = rng.integers(1, r - size, size=2)
            x0, y0 = ci * r + ox, cj * r + oy
            mask[y0:y0 + size, x0:x0 + size] = True
    return mask


def _boundary_inclusions(g: GridHierarchy, rng: np.random.Generator, params: dict[str, Any]) -> np.ndarray:
    r = g.ratio
    size = int(params.pop("size", max(2, r // 3)))
    if size < 2 or size > r - 2:
        raise CoefficientError(f"boundary inclusion size {size} must lie in [2, {r - 2}] to straddle a coarse edge")
    mask = np.zeros((g.n_fine, g.n_fine), dtype=bool)
    half = size // 2
    for line in range(1, g.n_coarse):
        for cell in range(g.n_coarse):
            along = cell * r + rng.integers(1, r - size)
            across = line * r - half
            mask[along:along + size, across:across + size] = True
            along = cell * r + rng.integers(1, r - size)
            mask[across:across + size, along:along + size] = True
    return mask


def _channels(g: GridHierarchy, rng: np.random.Generator, params: dict[str, Any]) -> np.ndarray:
    """Disjoint axis-aligned strips, at least ``gap`` background cells apart.

    The first strip is horizontal and runs from x=0 to x=1; every other strip
    stays off the domain boundary, so it is a floating component of the mask.
    """
    r, n = g.ratio, g.n_fine
    horizontal = int(params.pop("horizontal", 3))
    vertical = int(params.pop("vertical", 2))
    width = int(params.pop("width", max(2, r // 5)))
    gap = int(params.pop("gap", width))
    min_length = int(params.pop("min_length", 2))
    if width < 2 or width > min(r, n - 4):
        raise CoefficientError(f"channel width {width} must lie in [2, {min(r, n - 4)}] fine cells")
    if gap < 1:
        raise CoefficientError(f"channel gap must be at least one fine cell, got {gap}")
    if horizontal < 1 or vertical < 0:
        raise CoefficientError("channels need at least one horizontal channel and a non-negative vertical count")
    shortest = min(n - 2, max(1, min_length) * r)

    mask = np.zeros((n, n), dtype=bool)
    offset = rng.integers(1, n - width)
    mask[offset:offset + width, :] = True
    placed = 1
    orientations = ["horizontal"] * (horizontal - 1) + ["vertical"] * vertical
    rng.shuffle(orientations)
    for orientation in orientations:
        for _ in range(CHANNEL_ATTEMPTS):
            offset = rng.integers(1, n - width)
            length = rng.integers(shortest, n - 1)
            start = rng.integers(1, n - length)
            strip = (slice(offset, offset + width), slice(start, start + length))
            if orientation == "vertical":
                strip = strip[::-1]
            clearance = tuple(slice(max(s.start - gap, 0), s.stop + gap) for s in strip)
            if not mask[clearance].any():
                mask[strip] = True
                placed += 1
                break
    if placed < horizontal + vertical:
        logger.warning(
            "placed %d of %d channels; the rest found no free position with gap %d",
            placed, horizontal + vertical, gap,
        )
    return mask


def _binary_mask(g: GridHierarchy, params: dict[str, Any]) -> np.ndarray:
    if "mask" in params:
        mask = np.asarray(params.pop("mask"))
    elif "mask_csv" in params:
        mask = np.loadtxt(params.pop("mask_csv"), delimiter=",", ndmin=2)
    else:
        raise CoefficientError("binary_mask pattern needs a 'mask' array or a 'mask_csv' path")
    if mask.shape != (g.n_fine, g.n_fine):
        raise CoefficientError(f"mask has shape {mask.shape}, expected ({g.n_fine}, {g.n_fine})")
    return mask.astype(bool)


def save_csv(field: CoefficientField, path: str | Path) -> Path:
    """Write kappa as n_fine rows (y ascending) of 17-significant-digit values plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        for row in field.as_grid():
            writer.writerow([f"{value:.17g}" for value in row])
    path.with_suffix(".json").write_text(json.dumps(field.sidecar(), indent=2))
    return path


def load_csv(path: str | Path, n_fine: Optional[int] = None) -> CoefficientField:
    """Read a coefficient written by save_csv (the sidecar is optional)."""
    path = Path(path)
    with path.open(newline="") as handle:
        rows = [row for row in csv.reader(handle) if row]
    n = len(rows)
    if n == 0:
        raise CoefficientError(f"{path}: empty coefficient file")
    if n_fine is not None and n != n_fine:
        raise CoefficientError(f"{path}: {n} rows, expected {n_fine}")
    values = np.empty((n, n))
    for index, row in enumerate(rows):
        if len(row) != n:
            raise CoefficientError(f"{path}: row {index} has {len(row)} entries, expected {n}")
        try:
            values[index] = [float(entry) for entry in row]
        except ValueError as exc:
            raise CoefficientError(f"{path}: row {index}: {exc}") from None
        if np.any(~(values[index] > 0.0)):
            column = int(np.flatnonzero(~(values[index] > 0.0))[0])
            raise CoefficientError(f"{path}: row {index}, column {column}: non-positive value {values[index, column]}")

    pattern, seed = "csv", None
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        if meta.get("n_fine", n) != n:
            raise CoefficientError(f"{sidecar}: n_fine={meta['n_fine']} disagrees with {n} rows")
        pattern, seed = meta.get("pattern", pattern), meta.get("seed")
    return CoefficientField(values.ravel(), n, pattern, seed)
