"""Tests for coefficient generation and storage."""

import numpy as np
import pytest
import scipy.ndimage

from src.coeff.field import CoefficientField, generate, load_csv, save_csv
from src.errors import CoefficientError


def test_constant_pattern(grid16):
    field = generate(grid16, "constant", params={"value": 2.5})
    assert np.all(field.values == 2.5)
    assert field.eta == 1.0


def test_generation_is_reproducible(grid32):
    a = generate(grid32, "channels", eta=1e6, seed=5)
    b = generate(grid32, "channels", eta=1e6, seed=5)
    c = generate(grid32, "channels", eta=1e6, seed=6)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_channels_are_binary_and_one_crosses_the_domain(grid32):
    field = generate(grid32, "channels", eta=1e6, seed=1)
    assert set(np.unique(field.values)) == {1.0, 1e6}
    mask = field.feature_mask()
    assert np.any(mask.all(axis=1)), "expected a full-length horizontal channel"
    assert field.eta == pytest.approx(1e6)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_channels_are_disjoint_strips_and_only_one_touches_the_boundary(grid32, seed):
    mask = generate(grid32, "channels", eta=1e6, seed=seed, params={"horizontal": 4, "vertical": 3}).feature_mask()
    labels, count = scipy.ndimage.label(mask)
    assert count >= 2
    for index, box in enumerate(scipy.ndimage.find_objects(labels), start=1):
        assert np.all(labels[box] == index), "channels must not cross or touch"
        assert min(box[0].stop - box[0].start, box[1].stop - box[1].start) == 2
    edge = np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    assert len(set(edge[edge > 0])) == 1


def test_interior_inclusions_stay_inside_coarse_cells(grid32):
    field = generate(grid32, "interior_inclusions", eta=1e4, seed=2)
    j, i = np.nonzero(field.feature_mask())
    r = grid32.ratio
    assert i.size > 0
    assert np.all((i % r >= 1) & (i % r <= r - 2))
    assert np.all((j % r >= 1) & (j % r <= r - 2))


def test_boundary_inclusions_cross_coarse_edges(grid32):
    mask = generate(grid32, "boundary_inclusions", eta=1e4, seed=2, params={"size": 4}).feature_mask()
    r = grid32.ratio
    for line in range(1, grid32.n_coarse):
        assert mask[:, line * r - 1].any() and mask[:, line * r].any()


def test_binary_mask_pattern(grid16):
    mask = np.zeros((16, 16), dtype=bool)
    mask[3, 2:9] = True
    field = generate(grid16, "binary_mask", eta=100.0, params={"mask": mask})
    assert np.array_equal(field.feature_mask(), mask)


@pytest.mark.parametrize("kwargs", [
    {"pattern": "stripes"},
    {"pattern": "channels", "eta": 0.5},
    {"pattern": "channels", "params": {"colour": "red"}},
    {"pattern": "channels", "params": {"width": 1}},
    {"pattern": "channels", "params": {"gap": 0}},
    {"pattern": "interior_inclusions", "params": {"size": 4}},
    {"pattern": "binary_mask"},
])
def test_generate_rejects_bad_requests(grid16, kwargs):
    with pytest.raises(CoefficientError):
        generate(grid16, **kwargs)


def test_field_rejects_non_positive_values():
    with pytest.raises(CoefficientError):
        CoefficientField(np.array([1.0, 0.0, 2.0, 3.0]), 2)
    with pytest.raises(CoefficientError):
        CoefficientField(np.ones(5), 2)


def test_csv_round_trip_keeps_values_and_sidecar(grid16, tmp_path):
    field = generate(grid16, "channels", eta=1e6 / 3, seed=4)
    path = save_csv(field, tmp_path / "kappa.csv")
    assert path.with_suffix(".json").exists()
    loaded = load_csv(path, n_fine=16)
    assert np.array_equal(loaded.values, field.values)
    assert loaded.pattern == "channels"
    assert loaded.seed == 4


def test_load_csv_names_the_bad_entry(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,1\n1,-2\n")
    with pytest.raises(CoefficientError, match="row 1, column 1"):
        load_csv(path)
    path.write_text("1,1\n1\n")
    with pytest.raises(CoefficientError, match="row 1"):
        load_csv(path)
