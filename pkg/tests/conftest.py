"""Shared builders for the test suite (desk-scale grids only)."""

import numpy as np
import pytest

from src.coeff.field import CoefficientField, generate
from src.grid.hierarchy import build_hierarchy


def channel_mask_field(g, rows, x_range, eta):
    """Background 1 with horizontal channels on the given fine-cell rows over x_range."""
    mask = np.zeros((g.n_fine, g.n_fine), dtype=bool)
    for row in rows:
        mask[row, x_range[0]:x_range[1]] = True
    return CoefficientField(np.where(mask, eta, 1.0).ravel(), g.n_fine, "custom"), mask


@pytest.fixture
def grid16():
    return build_hierarchy(16, 4)


@pytest.fixture
def grid32():
    return build_hierarchy(32, 4)


@pytest.fixture
def unit_field16(grid16):
    return generate(grid16, "constant")


@pytest.fixture
def channels16(grid16):
    return generate(grid16, "channels", eta=1e4, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
