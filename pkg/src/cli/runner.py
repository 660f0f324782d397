"""Experiment runner: builds coefficients, coarse spaces and preconditioners, then runs PCG."""

import csv
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from src.cli.config import CoefficientConfig, ExperimentConfig, MethodConfig, MethodName, apply_point
from src.coarse.cem import build_cem_aux, build_cem_basis
from src.coarse.export import export_coarse_space
from src.coarse.pou import build_pou
from src.coarse.snapshots import SnapshotSpace, build_snapshot_spaces, build_gmsfem_space
from src.coarse.spectral import Selection, SelectionMode, SpectralVariant, build_pou_space, build_spectral_space
from src.coeff.field import CoefficientField, generate, load_csv, save_csv
from src.context import set_sweep_point
from src.errors import SolverError
from src.fem.assembly import BoundaryCondition, assemble_load, assemble_stiffness
from src.fem.operators import SparseOperator
from src.grid.hierarchy import GridHierarchy, build_hierarchy, overlapping_decomposition
from src.precond.base import ExactPreconditioner, IdentityPreconditioner, Preconditioner
from src.precond.hybrid import hybrid_cem
from src.precond.pcg import pcg
from src.precond.schwarz import one_level, two_level

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "method", "variant", "eta", "H", "h", "overlap_or_k",
    "basis_count", "coarse_dim", "iterations", "cond_estimate", "wall_ms",
]


@dataclass
class ResultRow:
    method: str
    variant: str
    eta: float
    H: float
    h: float
    overlap_or_k: Any
    basis_count: int
    coarse_dim: int
    iterations: int
    cond_estimate: float
    wall_ms: float
    converged: bool = False
    point: dict = field(default_factory=dict)
    report: Optional[dict] = None
    error: Optional[str] = None

    def csv_values(self) -> list[str]:
        return [
            self.method, self.variant, f"{self.eta:.6g}", f"{self.H:.6g}", f"{self.h:.6g}",
            str(self.overlap_or_k), str(self.basis_count), str(self.coarse_dim),
            str(self.iterations), f"{self.cond_estimate:.6g}", f"{self.wall_ms:.1f}",
        ]


@dataclass
class RunResult:
    rows: list[ResultRow]
    csv_path: Path
    json_path: Path

    @property
    def all_converged(self) -> bool:
        return all(row.converged for row in self.rows)


def expand_sweeps(config: ExperimentConfig) -> list[dict]:
    """Sweep points in order: the cartesian product within each sweep, sweeps concatenated."""
    if not config.sweeps:
        return [{}]
    points = []
    for sweep in config.sweeps:
        keys = list(sweep)
        for values in itertools.product(*(sweep[key] for key in keys)):
            points.append(dict(zip(keys, values)))
    return points


def point_label(index: int, point: dict) -> str:
    if not point:
        return f"p{index}"
    return f"p{index}[" + ",".join(f"{key}={value:g}" for key, value in point.items()) + "]"


def build_coefficient(g: GridHierarchy, coefficient: CoefficientConfig) -> CoefficientField:
    if coefficient.csv is not None:
        return load_csv(coefficient.csv, g.n_fine)
    return generate(g, coefficient.pattern, coefficient.eta, coefficient.seed, coefficient.params)


def build_coarse_space(g: GridHierarchy, field: CoefficientField, method: MethodConfig, pou, operator=None):
    """The coarse space a method uses, or None for methods without one."""
    if method.method == MethodName.HYBRID.value:
        aux = build_cem_aux(g, field, pou, Selection(SelectionMode.FIXED, method.basis_per_block))
        return build_cem_basis(g, field, aux, method.k, stiffness=operator)
    if method.method != MethodName.TWO_LEVEL.value:
        return None
    variant = SpectralVariant(method.variant)
    selection = method.selection.to_selection()
    if variant is SpectralVariant.POU:
        return build_pou_space(g, pou)
    if variant is SpectralVariant.GMSFEM:
        snapshots = (
            SnapshotSpace.full(g) if method.samples is None
            else build_snapshot_spaces(g, field, method.samples, seed=field.seed or 0)
        )
        return build_gmsfem_space(g, field, pou, snapshots, selection, mass=method.mass)
    return build_spectral_space(g, field, pou, variant, selection)


def build_preconditioner(
    g: GridHierarchy,
    field: CoefficientField,
    method: MethodConfig,
    operator: SparseOperator,
    coarse,
    pou,
) -> Preconditioner:
    name = MethodName(method.method)
    if name is MethodName.IDENTITY:
        return IdentityPreconditioner(operator)
    if name is MethodName.EXACT:
        return ExactPreconditioner(operator)
    if name is MethodName.HYBRID:
        return hybrid_cem(g, field, coarse, method.k, pou=pou, operator=operator, coarse_kappa=method.coarse_kappa)
    subdomains = overlapping_decomposition(g, method.overlap, method.subdomains)
    if name is MethodName.ONE_LEVEL:
        return one_level(g, field, subdomains, operator=operator)
    return two_level(g, field, subdomains, coarse, operator=operator)


def _describe(method: MethodConfig, coarse) -> tuple[str, Any, int]:
    name = MethodName(method.method)
    if name is MethodName.HYBRID:
        return "cem", method.k, method.basis_per_block
    if name is MethodName.ONE_LEVEL:
        return "", method.overlap, 0
    if name is MethodName.TWO_LEVEL:
        return method.variant, method.overlap, max(coarse.counts, default=0) if coarse is not None else 0
    return "", "", 0


def run_point(config: ExperimentConfig, index: int, point: dict, out_dir: Path) -> list[ResultRow]:
    """Every method of the config at one sweep point."""
    label = point_label(index, point)
    set_sweep_point(label)
    g = build_hierarchy(config.grid.n_fine, config.grid.n_coarse)
    pou = build_pou(g)
    rows = []
    fields_by_coefficient: dict[tuple[float, int], CoefficientField] = {}

    for method_config in config.methods:
        coefficient, method = apply_point(config, method_config, point)
        key = (coefficient.eta, coefficient.seed)
        if key not in fields_by_coefficient:
            fields_by_coefficient[key] = build_coefficient(g, coefficient)
        field_ = fields_by_coefficient[key]
        variant, overlap_or_k, basis_count = _describe(method, None)
        row = ResultRow(method.name, variant, field_.eta, g.H, g.h, overlap_or_k, basis_count, 0, -1, float("nan"), 0.0, point=point)
        try:
            operator = assemble_stiffness(g, field_)
            coarse = build_coarse_space(g, field_, method, pou, operator)
            precond = build_preconditioner(g, field_, method, operator, coarse, pou)
            b = assemble_load(g, 1.0, bc=BoundaryCondition.DIRICHLET)
            _, report = pcg(operator, b, precond, tol=config.pcg.tol, maxit=config.pcg.maxit)
        except SolverError as exc:
            logger.error("%s failed at %s: %s", method.name, label, exc)
            row.error = str(exc)
            rows.append(row)
            continue

        row.variant, row.overlap_or_k, row.basis_count = _describe(method, coarse)
        row.coarse_dim = coarse.dim if coarse is not None else 0
        row.iterations = report.iterations
        row.cond_estimate = report.cond_estimate
        row.wall_ms = report.wall_ms
        row.converged = report.converged
        row.report = report.to_dict()
        rows.append(row)
        _export(config, out_dir, f"{index}_{method.name}", operator, coarse)
    return rows


def _export(config: ExperimentConfig, out_dir: Path, tag: str, operator: SparseOperator, coarse) -> None:
    stem = out_dir / f"{config.output.stem}_{tag}"
    if config.output.export_matrix:
        operator.export_matrix_market(stem.with_name(stem.name + "_A.mtx"))
    if config.output.export_coarse and coarse is not None:
        export_coarse_space(coarse, stem.with_name(stem.name + "_coarse"))


def run(config: ExperimentConfig, out_dir: str | Path, jobs: int = 1) -> RunResult:
    """Run every method at every sweep point and write ``<stem>.csv`` and ``<stem>.json``."""
    out_dir = Path(config.output.dir or out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    points = expand_sweeps(config)
    logger.info("running %d methods at %d sweep points with %d jobs", len(config.methods), len(points), jobs)

    if jobs <= 1:
        per_point = [run_point(config, i, point, out_dir) for i, point in enumerate(points)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_point = list(pool.map(lambda item: run_point(config, item[0], item[1], out_dir), enumerate(points)))
    rows = [row for point_rows in per_point for row in point_rows]

    csv_path = out_dir / f"{config.output.stem}.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_values())

    json_path = out_dir / f"{config.output.stem}.json"
    json_path.write_text(json.dumps({
        "config": asdict(config),
        "rows": [_json_row(row) for row in rows],
    }, indent=2))
    result = RunResult(rows, csv_path, json_path)
    logger.info("wrote %d rows to %s (all converged: %s)", len(rows), csv_path, result.all_converged)
    return result


def _json_row(row: ResultRow) -> dict:
    data = asdict(row)
    for key in ("cond_estimate", "eta"):
        if not np.isfinite(data[key]):
            data[key] = None
    if data["report"] is not None and not np.isfinite(data["report"]["cond_estimate"]):
        data["report"]["cond_estimate"] = None
    return data


def dump_eigs(config: ExperimentConfig, out_dir: str | Path) -> list[Path]:
    """One CSV of [region_id, index, lambda] per method with local eigenproblems, per sweep point."""
    out_dir = Path(config.output.dir or out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    g = build_hierarchy(config.grid.n_fine, config.grid.n_coarse)
    pou = build_pou(g)
    paths = []
    for index, point in enumerate(expand_sweeps(config)):
        set_sweep_point(point_label(index, point))
        for method_config in config.methods:
            coefficient, method = apply_point(config, method_config, point)
            coarse = build_coarse_space(g, build_coefficient(g, coefficient), method, pou)
            if coarse is None or not any(len(values) for values in coarse.eigenvalues):
                logger.info("%s has no local eigenproblems, skipped", method.name)
                continue
            path = out_dir / f"{config.output.stem}_eigs_{method.name}_p{index}.csv"
            with path.open("w", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(["region_id", "index", "lambda"])
                for region_id, values in enumerate(coarse.eigenvalues):
                    for k, value in enumerate(values):
                        writer.writerow([region_id, k + 1, f"{value:.17g}"])
            logger.info("%s: Lambda=%.4g, eigenvalues written to %s", method.name, coarse.min_excluded_eigenvalue, path)
            paths.append(path)
    return paths


def gen_coeff(config: ExperimentConfig, out_dir: str | Path) -> list[Path]:
    """Write the coefficient of every distinct (eta, seed) in the sweeps as CSV plus sidecar."""
    out_dir = Path(config.output.dir or out_dir)
    g = build_hierarchy(config.grid.n_fine, config.grid.n_coarse)
    paths, seen = [], set()
    for point in expand_sweeps(config):
        coefficient, _ = apply_point(config, config.methods[0], point)
        key = (coefficient.eta, coefficient.seed)
        if key in seen:
            continue
        seen.add(key)
        name = f"{config.output.stem}_kappa_eta{coefficient.eta:g}_seed{coefficient.seed}.csv"
        paths.append(save_csv(build_coefficient(g, coefficient), out_dir / name))
        logger.info("wrote coefficient %s", paths[-1])
    return paths
