"""Tests for config parsing, the experiment runner and the command-line entry point."""

import copy
import csv
import json
import logging

import pytest
import scipy.ndimage

from src.cli.commands import EXIT_CONFIG_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, build_parser, main, resolve_config
from src.cli.config import apply_point, load_config, parse_config
from src.cli.runner import CSV_COLUMNS, dump_eigs, expand_sweeps, gen_coeff, point_label, run
from src.coeff.field import generate
from src.context import SweepPointFilter, set_sweep_point
from src.data.presets import PRESETS, SMOKE
from src.errors import ConfigError
from src.grid.hierarchy import build_hierarchy
from src.settings import Settings


def small_config(**overrides):
    data = {
        "schema_version": 1,
        "grid": {"n_fine": 16, "n_coarse": 4},
        "coefficient": {"pattern": "channels", "eta": 100.0, "seed": 3},
        "methods": [
            {"method": "one_level", "overlap": 2},
            {"method": "two_level", "variant": "kappa_mass", "overlap": 2, "selection": {"mode": "fixed", "count": 2}},
            {"method": "hybrid", "basis_per_block": 2, "k": 2},
        ],
        "pcg": {"tol": 1e-8, "maxit": 500},
        "output": {"stem": "small"},
    }
    data.update(overrides)
    return data


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def read_csv(path):
    with path.open(newline="") as handle:
        return list(csv.reader(handle))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_parse(name):
    config = parse_config(copy.deepcopy(PRESETS[name]))
    assert config.schema_version == 1
    assert config.methods


def test_parse_fills_defaults():
    config = parse_config(small_config())
    assert config.grid.n_fine == 16
    assert config.methods[0].name == "one_level"
    assert config.methods[1].selection.count == 2
    assert config.methods[2].coarse_kappa is True
    assert config.output.export_coarse is False


def test_unknown_field_names_its_path():
    data = small_config()
    data["methods"][0]["bogus"] = 1
    with pytest.raises(ConfigError, match=r"methods\[0\]\.bogus: unknown field"):
        parse_config(data)


def test_wrong_type_names_its_path():
    data = small_config()
    data["pcg"]["maxit"] = "many"
    with pytest.raises(ConfigError, match=r"pcg\.maxit: expected an integer"):
        parse_config(data)


@pytest.mark.parametrize("version", [None, 2, "1"])
def test_schema_version_is_required(version):
    data = small_config(schema_version=version)
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config(data)


def test_grid_errors_surface_as_config_errors():
    with pytest.raises(ConfigError, match="^grid: "):
        parse_config(small_config(grid={"n_fine": 30, "n_coarse": 4}))


@pytest.mark.parametrize("method, message", [
    ({"method": "multigrid"}, r"methods\[0\]\.method"),
    ({"method": "two_level", "variant": "fancy"}, r"methods\[0\]\.variant"),
    ({"method": "hybrid", "k": 0}, r"methods\[0\]\.k"),
    ({"method": "one_level", "overlap": -1}, r"methods\[0\]\.overlap"),
    ({"method": "two_level", "selection": {"mode": "gap", "gap_ratio": 0.5}}, r"methods\[0\]\.selection"),
])
def test_invalid_methods(method, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(small_config(methods=[method]))


def test_sweep_keys_are_checked():
    with pytest.raises(ConfigError, match=r"sweeps\[0\]\.width: unknown sweep field"):
        parse_config(small_config(sweeps=[{"width": [1]}]))
    with pytest.raises(ConfigError, match=r"sweeps\[0\]\.k"):
        parse_config(small_config(sweeps=[{"k": [0]}]))


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="no such config file"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)


def test_sweeps_expand_in_order():
    config = parse_config(small_config(sweeps=[{"k": [3, 4], "eta": [1e4]}, {"eta": [1e3, 1e5], "k": [3]}]))
    points = expand_sweeps(config)
    assert points == [
        {"k": 3, "eta": 1e4},
        {"k": 4, "eta": 1e4},
        {"eta": 1e3, "k": 3},
        {"eta": 1e5, "k": 3},
    ]
    assert point_label(1, points[1]) == "p1[k=4,eta=10000]"
    assert point_label(0, {}) == "p0"


def test_apply_point_overrides_coefficient_and_method():
    config = parse_config(small_config())
    coefficient, method = apply_point(config, config.methods[1], {"eta": 1e6, "basis": 4, "overlap": 1})
    assert coefficient.eta == 1e6
    assert coefficient.seed == 3
    assert method.overlap == 1
    assert method.basis_per_block == 4
    assert method.selection.count == 4
    assert config.methods[1].selection.count == 2


def test_run_writes_results(tmp_path):
    config = parse_config(small_config())
    result = run(config, tmp_path / "a")
    assert result.all_converged
    rows = read_csv(result.csv_path)
    assert rows[0] == CSV_COLUMNS
    assert [row[0] for row in rows[1:]] == ["one_level", "two_level", "hybrid"]
    assert rows[3][1] == "cem"
    assert int(rows[2][7]) == 2 * 25
    assert int(rows[3][7]) == 2 * 16

    data = json.loads(result.json_path.read_text())
    assert data["config"]["grid"] == {"n_fine": 16, "n_coarse": 4}
    assert all(row["converged"] for row in data["rows"])
    assert data["rows"][0]["report"]["iterations"] == int(rows[1][8])


def test_reruns_are_identical_apart_from_timing(tmp_path):
    config = parse_config(small_config())
    first = read_csv(run(config, tmp_path / "a").csv_path)
    second = read_csv(run(config, tmp_path / "b").csv_path)
    wall = CSV_COLUMNS.index("wall_ms")
    strip = lambda rows: [row[:wall] + row[wall + 1:] for row in rows]
    assert strip(first) == strip(second)


def test_parallel_sweep_keeps_point_order(tmp_path):
    config = parse_config(small_config(
        methods=[{"method": "one_level", "overlap": 1}],
        sweeps=[{"eta": [10.0, 1000.0], "overlap": [1, 2]}],
    ))
    serial = read_csv(run(config, tmp_path / "serial").csv_path)
    parallel = read_csv(run(config, tmp_path / "parallel", jobs=3).csv_path)
    wall = CSV_COLUMNS.index("wall_ms")
    assert [row[:wall] for row in serial] == [row[:wall] for row in parallel]
    assert [row[5] for row in serial[1:]] == ["1", "2", "1", "2"]


def test_exports(tmp_path):
    config = parse_config(small_config(
        methods=[{"method": "two_level", "selection": {"count": 1}}],
        output={"stem": "ex", "export_coarse": True, "export_matrix": True},
    ))
    run(config, tmp_path)
    assert (tmp_path / "ex_0_two_level_A.mtx").exists()
    assert (tmp_path / "ex_0_two_level_coarse.bin").exists()
    assert json.loads((tmp_path / "ex_0_two_level_coarse.json").read_text())["dim"] == 25


def test_main_exit_codes(tmp_path, capsys):
    settings = Settings(out_dir=tmp_path / "out")
    bad = small_config()
    bad["grid"]["n_fine"] = 30
    assert main(["run", str(write_config(tmp_path, bad, "bad.json"))], settings=settings) == EXIT_CONFIG_ERROR
    assert "grid:" in capsys.readouterr().out

    assert main(["run"], settings=settings) == EXIT_CONFIG_ERROR
    assert main(["run", str(write_config(tmp_path, small_config())), "--jobs", "0"], settings=settings) == EXIT_CONFIG_ERROR

    good = write_config(tmp_path, small_config())
    assert main(["run", str(good)], settings=settings) == EXIT_OK
    assert (tmp_path / "out" / "small.csv").exists()

    strict = small_config(pcg={"tol": 1e-8, "maxit": 1})
    code = main(["run", str(write_config(tmp_path, strict, "strict.json")), "--out", str(tmp_path / "strict")],
                settings=settings)
    assert code == EXIT_NOT_CONVERGED


def test_smoke_preset_runs(tmp_path):
    assert main(["run", "--preset", "smoke", "--out", str(tmp_path)], settings=Settings()) == EXIT_OK
    rows = read_csv(tmp_path / f"{SMOKE['output']['stem']}.csv")
    assert len(rows) == 1 + len(SMOKE["methods"])


def test_preset_and_file_are_exclusive(tmp_path):
    path = write_config(tmp_path, small_config())
    assert main(["run", str(path), "--preset", "smoke"], settings=Settings(out_dir=tmp_path)) == EXIT_CONFIG_ERROR


def test_eigs_writes_one_file_per_spectral_method(tmp_path):
    config = parse_config(small_config())
    paths = dump_eigs(config, tmp_path)
    assert [path.name for path in paths] == ["small_eigs_two_level_p0.csv", "small_eigs_hybrid_p0.csv"]
    rows = read_csv(paths[0])
    assert rows[0] == ["region_id", "index", "lambda"]
    # kappa_mass with count 2 computes 3 eigenvalues on each of the 25 neighborhoods
    assert len(rows) == 1 + 3 * 25
    assert rows[1][:2] == ["0", "1"]


def test_gen_coeff_writes_each_distinct_coefficient(tmp_path):
    config = parse_config(small_config(sweeps=[{"eta": [10.0, 100.0], "k": [2, 3]}]))
    paths = gen_coeff(config, tmp_path)
    assert [path.name for path in paths] == ["small_kappa_eta10_seed3.csv", "small_kappa_eta100_seed3.csv"]
    for path in paths:
        assert len(read_csv(path)) == 16
        assert json.loads(path.with_suffix(".json").read_text())["seed"] == 3


def test_gen_coeff_command(tmp_path, capsys):
    path = write_config(tmp_path, small_config())
    assert main(["gen-coeff", str(path), "--out", str(tmp_path / "k")], settings=Settings()) == EXIT_OK
    assert "small_kappa_eta100_seed3.csv" in capsys.readouterr().out


def test_sweep_point_filter_tags_records():
    record = logging.LogRecord("x", logging.INFO, __file__, 1, "msg", None, None)
    set_sweep_point("p3[eta=10]")
    assert SweepPointFilter().filter(record)
    assert record.point == "p3[eta=10]"


@pytest.mark.parametrize("command", ["eigs", "gen-coeff"])
def test_unreadable_coefficient_file_exits_with_error(tmp_path, capsys, command):
    config = small_config(coefficient={"csv": str(tmp_path / "missing.csv")})
    path = write_config(tmp_path, config)
    assert main([command, str(path), "--out", str(tmp_path / "out")], settings=Settings()) == EXIT_CONFIG_ERROR
    assert "missing.csv" in capsys.readouterr().out


def test_eigs_reports_bad_coefficient_values(tmp_path):
    kappa = tmp_path / "kappa.csv"
    kappa.write_text("\n".join(",".join(["1"] * 15 + ["-1"]) for _ in range(16)) + "\n")
    path = write_config(tmp_path, small_config(coefficient={"csv": str(kappa)}))
    assert main(["eigs", str(path), "--out", str(tmp_path / "out")], settings=Settings()) == EXIT_CONFIG_ERROR


@pytest.mark.parametrize("name, alias", [("table1", "snapshot_contrast"), ("table2", "hybrid_layers")])
def test_reference_presets_resolve_by_table_key_and_alias(name, alias):
    assert PRESETS[name] is PRESETS[alias]
    args = build_parser(Settings()).parse_args(["run", "--preset", name])
    config = resolve_config(args)
    assert config.grid.n_fine == 200
    assert config.coefficient.pattern == "channels"


def test_snapshot_preset_puts_two_channels_in_many_neighborhoods():
    preset = PRESETS["table1"]
    g = build_hierarchy(preset["grid"]["n_fine"], preset["grid"]["n_coarse"])
    coefficient = preset["coefficient"]
    mask = generate(g, "channels", coefficient["eta"], coefficient["seed"], coefficient["params"]).feature_mask()
    r = g.ratio
    crowded = 0
    for cj in range(1, g.n_coarse):
        for ci in range(1, g.n_coarse):
            _, components = scipy.ndimage.label(mask[(cj - 1) * r:(cj + 1) * r, (ci - 1) * r:(ci + 1) * r])
            crowded += components >= 2
    assert crowded >= 10
