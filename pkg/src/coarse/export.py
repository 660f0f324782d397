"""Write coarse spaces to disk: JSON metadata plus a dense column file."""

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

HEADER_DTYPE = "<u8"
DATA_DTYPE = "<f8"


def _finite_or_none(value: float):
    return float(value) if np.isfinite(value) else None


def coarse_space_metadata(space) -> dict[str, Any]:
    return {
        "variant": space.variant,
        "rows": int(space.basis.shape[0]),
        "dim": int(space.dim),
        "counts": [int(c) for c in space.counts],
        "eigenvalues": [[float(x) for x in values] for values in space.eigenvalues],
        "min_excluded_eigenvalue": _finite_or_none(space.min_excluded_eigenvalue),
    }


def export_coarse_space(space, stem: str | Path) -> tuple[Path, Path]:
    """Write ``<stem>.json`` and ``<stem>.bin``.

    The binary file holds a 16-byte header (rows, cols as little-endian
    uint64) followed by the basis as column-major little-endian float64.
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    json_path = stem.with_suffix(".json")
    bin_path = stem.with_suffix(".bin")

    json_path.write_text(json.dumps(coarse_space_metadata(space), indent=2))
    dense = space.basis.toarray()
    with open(bin_path, "wb") as fh:
        fh.write(np.array(dense.shape, dtype=HEADER_DTYPE).tobytes())
        fh.write(dense.astype(DATA_DTYPE).tobytes(order="F"))
    logger.info("exported %s coarse space (%d x %d) to %s", space.variant, dense.shape[0], dense.shape[1], bin_path)
    return json_path, bin_path


def load_coarse_basis(path: str | Path) -> np.ndarray:
    """Read back a basis written by export_coarse_space."""
    raw = Path(path).read_bytes()
    rows, cols = np.frombuffer(raw[:16], dtype=HEADER_DTYPE)
    data = np.frombuffer(raw[16:], dtype=DATA_DTYPE)
    return data.reshape((int(rows), int(cols)), order="F")
