"""Committed experiment presets (fixed seeds, so runs are reproducible)."""

from typing import Any

# Two-level additive Schwarz with D_j' = omega_j: chi-only coarse space
# against GMsFEM on the full local space and on 8 / 15 random snapshots.
_SNAPSHOT_SELECTION = {"mode": "threshold", "threshold": 10.0, "max_count": 8}

SNAPSHOT_CONTRAST: dict[str, Any] = {
    "schema_version": 1,
    "grid": {"n_fine": 200, "n_coarse": 10},
    "coefficient": {
        "pattern": "channels", "eta": 1e6, "seed": 11,
        "params": {"horizontal": 14, "vertical": 6, "width": 3, "gap": 3, "min_length": 3},
    },
    "methods": [
        {"label": "MS", "method": "two_level", "variant": "pou", "overlap": 0, "subdomains": "neighborhoods"},
        {"label": "Full", "method": "two_level", "variant": "gmsfem", "overlap": 0,
         "subdomains": "neighborhoods", "selection": _SNAPSHOT_SELECTION},
        {"label": "8-rand", "method": "two_level", "variant": "gmsfem", "samples": 8, "overlap": 0,
         "subdomains": "neighborhoods", "selection": _SNAPSHOT_SELECTION},
        {"label": "15-rand", "method": "two_level", "variant": "gmsfem", "samples": 15, "overlap": 0,
         "subdomains": "neighborhoods", "selection": _SNAPSHOT_SELECTION},
    ],
    "pcg": {"tol": 1e-8, "maxit": 2000},
    "sweeps": [{"eta": [1e6, 1e9]}],
    "output": {"stem": "snapshot_contrast"},
}

# Hybrid preconditioner, 3 auxiliary functions per block: k sweep at eta=1e4,
# then eta sweep at k=3.
HYBRID_LAYERS: dict[str, Any] = {
    "schema_version": 1,
    "grid": {"n_fine": 200, "n_coarse": 20},
    "coefficient": {
        "pattern": "channels", "eta": 1e4, "seed": 7,
        "params": {"horizontal": 8, "vertical": 4, "width": 2, "gap": 2, "min_length": 3},
    },
    "methods": [
        {"label": "hybrid", "method": "hybrid", "basis_per_block": 3, "k": 3},
    ],
    "pcg": {"tol": 1e-8, "maxit": 500},
    "sweeps": [
        {"k": [3, 4, 5, 6], "eta": [1e4]},
        {"eta": [1e3, 1e4, 1e5], "k": [3]},
    ],
    "output": {"stem": "hybrid_layers"},
}

SMOKE: dict[str, Any] = {
    "schema_version": 1,
    "grid": {"n_fine": 32, "n_coarse": 4},
    "coefficient": {"pattern": "constant"},
    "methods": [
        {"method": "one_level", "overlap": 2},
        {"method": "two_level", "variant": "kappa_mass", "overlap": 2, "selection": {"mode": "fixed", "count": 1}},
        {"method": "hybrid", "basis_per_block": 1, "k": 2},
    ],
    "pcg": {"tol": 1e-8, "maxit": 500},
    "output": {"stem": "smoke"},
}

PRESETS: dict[str, dict[str, Any]] = {
    "table1": SNAPSHOT_CONTRAST,
    "table2": HYBRID_LAYERS,
    "smoke": SMOKE,
    "snapshot_contrast": SNAPSHOT_CONTRAST,
    "hybrid_layers": HYBRID_LAYERS,
}
