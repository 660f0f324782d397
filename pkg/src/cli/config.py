"""Strict experiment configuration.

Configs are JSON objects with ``schema_version`` 1. Every section is parsed
into a frozen dataclass; unknown keys and ill-typed values raise ConfigError
naming the dotted path of the offending field.
"""

import json
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from src.coarse.spectral import Selection, SelectionMode, SpectralVariant
from src.coeff.field import Pattern
from src.errors import ConfigError, GridError
from src.grid.hierarchy import SubdomainMode, build_hierarchy

SCHEMA_VERSION = 1
SWEEP_KEYS = ("eta", "seed", "k", "overlap", "basis", "samples")


class MethodName(str, Enum):
    IDENTITY = "identity"
    EXACT = "exact"
    ONE_LEVEL = "one_level"
    TWO_LEVEL = "two_level"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class GridConfig:
    n_fine: int
    n_coarse: int


@dataclass(frozen=True)
class CoefficientConfig:
    pattern: str = Pattern.CHANNELS.value
    eta: float = 1.0
    seed: int = 0
    params: dict = field(default_factory=dict)
    csv: Optional[str] = None


@dataclass(frozen=True)
class SelectionConfig:
    mode: str = SelectionMode.FIXED.value
    count: int = 3
    threshold: float = 0.0
    gap_ratio: float = 10.0
    max_count: int = 8

    def to_selection(self) -> Selection:
        return Selection(SelectionMode(self.mode), self.count, self.threshold, self.gap_ratio, self.max_count)


@dataclass(frozen=True)
class MethodConfig:
    method: str
    label: str = ""
    variant: str = SpectralVariant.KAPPA_MASS.value
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    overlap: int = 2
    subdomains: str = SubdomainMode.COARSE_CELLS.value
    samples: Optional[int] = None
    mass: str = SpectralVariant.KAPPA_MASS.value
    basis_per_block: int = 3
    k: int = 3
    coarse_kappa: bool = True

    @property
    def name(self) -> str:
        return self.label or self.method


@dataclass(frozen=True)
class PcgConfig:
    tol: float = 1e-8
    maxit: int = 500


@dataclass(frozen=True)
class OutputConfig:
    stem: str = "results"
    dir: Optional[str] = None
    export_coarse: bool = False
    export_matrix: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridConfig
    methods: list[MethodConfig]
    coefficient: CoefficientConfig = field(default_factory=CoefficientConfig)
    pcg: PcgConfig = field(default_factory=PcgConfig)
    sweeps: list[dict] = field(default_factory=list)
    output: OutputConfig = field(default_factory=OutputConfig)
    schema_version: int = SCHEMA_VERSION


_TYPES = {int: "an integer", float: "a number", str: "a string", bool: "a boolean", dict: "an object"}


def _value(data: Any, expected: type, path: str, optional: bool = False):
    if data is None and optional:
        return None
    if expected is float and isinstance(data, (int, float)) and not isinstance(data, bool):
        return float(data)
    if expected is int and isinstance(data, bool):
        raise ConfigError(f"{path}: expected {_TYPES[int]}, got {data!r}")
    if not isinstance(data, expected):
        raise ConfigError(f"{path}: expected {_TYPES[expected]}, got {data!r}")
    return data


def _object(data: Any, cls: type, path: str, scalars: dict[str, tuple[type, bool]], nested: Optional[dict] = None):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {data!r}")
    nested = nested or {}
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown field")
    kwargs = {}
    for key, raw in data.items():
        where = f"{path}.{key}"
        if key in nested:
            kwargs[key] = nested[key](raw, where)
        else:
            expected, optional = scalars[key]
            kwargs[key] = _value(raw, expected, where, optional)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _choice(value: str, enum: type[Enum], path: str) -> None:
    allowed = [member.value for member in enum]
    if value not in allowed:
        raise ConfigError(f"{path}: '{value}' is not one of {allowed}")


def _parse_selection(data: Any, path: str) -> SelectionConfig:
    config = _object(data, SelectionConfig, path, {
        "mode": (str, False), "count": (int, False), "threshold": (float, False),
        "gap_ratio": (float, False), "max_count": (int, False),
    })
    _choice(config.mode, SelectionMode, f"{path}.mode")
    try:
        config.to_selection()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config


def _parse_method(data: Any, path: str) -> MethodConfig:
    config = _object(data, MethodConfig, path, {
        "method": (str, False), "label": (str, False), "variant": (str, False),
        "overlap": (int, False), "subdomains": (str, False), "samples": (int, True),
        "mass": (str, False), "basis_per_block": (int, False), "k": (int, False),
        "coarse_kappa": (bool, False),
    }, {"selection": _parse_selection})
    _choice(config.method, MethodName, f"{path}.method")
    _choice(config.variant, SpectralVariant, f"{path}.variant")
    _choice(config.subdomains, SubdomainMode, f"{path}.subdomains")
    if config.mass not in (SpectralVariant.KAPPA_MASS.value, SpectralVariant.MS_MASS.value):
        raise ConfigError(f"{path}.mass: '{config.mass}' is not one of ['kappa_mass', 'ms_mass']")
    if config.overlap < 0:
        raise ConfigError(f"{path}.overlap: must be non-negative, got {config.overlap}")
    if config.samples is not None and config.samples < 0:
        raise ConfigError(f"{path}.samples: must be non-negative, got {config.samples}")
    if config.method == MethodName.HYBRID.value:
        if config.k < 1:
            raise ConfigError(f"{path}.k: hybrid needs at least one oversampling layer, got {config.k}")
        if config.basis_per_block < 1:
            raise ConfigError(f"{path}.basis_per_block: must be at least 1, got {config.basis_per_block}")
    return config


def _parse_list(data: Any, path: str, item) -> list:
    if not isinstance(data, list):
        raise ConfigError(f"{path}: expected a list, got {data!r}")
    return [item(entry, f"{path}[{index}]") for index, entry in enumerate(data)]


def _parse_sweep(data: Any, path: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {data!r}")
    sweep = {}
    for key, values in data.items():
        if key not in SWEEP_KEYS:
            raise ConfigError(f"{path}.{key}: unknown sweep field (allowed: {list(SWEEP_KEYS)})")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{path}.{key}: expected a non-empty list")
        expected = float if key == "eta" else int
        sweep[key] = [_value(value, expected, f"{path}.{key}[{i}]") for i, value in enumerate(values)]
    return sweep


def parse_config(data: Any) -> ExperimentConfig:
    """Validate a decoded JSON document and build the configuration."""
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    for required in ("grid", "methods"):
        if required not in data:
            raise ConfigError(f"{required}: missing required field")

    config = _object(data, ExperimentConfig, "config", {"schema_version": (int, False)}, {
        "grid": lambda raw, path: _object(raw, GridConfig, path, {"n_fine": (int, False), "n_coarse": (int, False)}),
        "methods": lambda raw, path: _parse_list(raw, path, _parse_method),
        "coefficient": lambda raw, path: _object(raw, CoefficientConfig, path, {
            "pattern": (str, False), "eta": (float, False), "seed": (int, False),
            "params": (dict, False), "csv": (str, True),
        }),
        "pcg": lambda raw, path: _object(raw, PcgConfig, path, {"tol": (float, False), "maxit": (int, False)}),
        "sweeps": lambda raw, path: _parse_list(raw, path, _parse_sweep),
        "output": lambda raw, path: _object(raw, OutputConfig, path, {
            "stem": (str, False), "dir": (str, True), "export_coarse": (bool, False), "export_matrix": (bool, False),
        }),
    })
    validate(config)
    return config


def validate(config: ExperimentConfig) -> None:
    """Cross-field checks that need more than one section."""
    try:
        build_hierarchy(config.grid.n_fine, config.grid.n_coarse)
    except GridError as exc:
        raise ConfigError(f"grid: {exc}") from None
    if not config.methods:
        raise ConfigError("methods: at least one method is required")
    if config.coefficient.csv is None:
        _choice(config.coefficient.pattern, Pattern, "coefficient.pattern")
    if config.coefficient.eta < 1.0:
        raise ConfigError(f"coefficient.eta: contrast must be >= 1, got {config.coefficient.eta}")
    if not config.pcg.tol > 0.0:
        raise ConfigError(f"pcg.tol: must be positive, got {config.pcg.tol}")
    if config.pcg.maxit < 1:
        raise ConfigError(f"pcg.maxit: must be at least 1, got {config.pcg.maxit}")
    for index, sweep in enumerate(config.sweeps):
        path = f"sweeps[{index}]"
        if config.coefficient.csv is not None and ("eta" in sweep or "seed" in sweep):
            raise ConfigError(f"{path}: eta and seed cannot be swept for a coefficient read from csv")
        if any(value < 1.0 for value in sweep.get("eta", [])):
            raise ConfigError(f"{path}.eta: contrast must be >= 1")
        if any(value < 1 for value in sweep.get("k", [])):
            raise ConfigError(f"{path}.k: oversampling layers must be at least 1")
        if any(value < 0 for value in sweep.get("overlap", []) + sweep.get("samples", [])):
            raise ConfigError(f"{path}: overlap and samples must be non-negative")
        if any(value < 1 for value in sweep.get("basis", [])):
            raise ConfigError(f"{path}.basis: must be at least 1")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data)


def apply_point(config: ExperimentConfig, method: MethodConfig, point: dict) -> tuple[CoefficientConfig, MethodConfig]:
    """Coefficient and method settings at one sweep point."""
    coefficient = config.coefficient
    if "eta" in point:
        coefficient = replace(coefficient, eta=point["eta"])
    if "seed" in point:
        coefficient = replace(coefficient, seed=point["seed"])
    if "k" in point:
        method = replace(method, k=point["k"])
    if "overlap" in point:
        method = replace(method, overlap=point["overlap"])
    if "samples" in point:
        method = replace(method, samples=point["samples"])
    if "basis" in point:
        method = replace(
            method,
            basis_per_block=point["basis"],
            selection=replace(method.selection, count=point["basis"]),
        )
    return coefficient, method
