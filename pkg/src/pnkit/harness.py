"""Experiment configuration, convergence studies and diffusion-limit checks."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .diffusion import DiffusionField, solve_diffusion_reference
from .discretization import State, project
from .errors import ConfigError, DomainError
from .mesh import Grid, Scheme, build_grid, dof_layout
from .moments import FluxSet, Geometry, Material, flux_set
from .timeloop import TimeConfig, TransportProblem, run_transient

__all__ = [
    "ExperimentConfig",
    "ModelSpec",
    "ErrorRow",
    "LimitRow",
    "load_config",
    "parse_config",
    "resolve_model",
    "initial_profile",
    "run_single",
    "l2_error",
    "l2_norm",
    "field_variance",
    "higher_moment_norm",
    "run_convergence",
    "limit_check",
    "convergence_rates",
    "emit",
    "emit_limit",
    "write_field",
]

log = logging.getLogger(__name__)

PROFILES: dict[str, Callable] = {
    "gaussian": lambda x: np.exp(-100.0 * (x - 0.5) ** 2),
    "sine": lambda x: 1.0 + np.sin(2.0 * np.pi * x),
    "sine2d": lambda x, z: 1.0 + np.sin(2.0 * np.pi * x) * np.sin(2.0 * np.pi * z),
    "constant": lambda x, *z: np.ones_like(x),
}

_PRESETS = {
    "P1Slab": (Geometry.SLAB, 1, "gaussian"),
    "P3Slab": (Geometry.SLAB, 3, "gaussian"),
    "P3PlaneParallel": (Geometry.PLANE_PARALLEL, 3, "sine2d"),
}

REFERENCE_CELLS = {1: 3200, 2: 80}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CustomModel(_Strict):
    geometry: Literal["slab", "planeparallel"]
    N: int = Field(ge=1, le=31)
    initial: Literal["gaussian", "sine", "sine2d", "constant"] = "gaussian"


class TimeSection(_Strict):
    bdf_order: Literal[1, 2] = 2
    dt_factor: float = Field(0.25, gt=0)
    final_time: float = Field(0.05, gt=0)


class ReferenceSection(_Strict):
    scheme: Scheme = Scheme.DG_Q1
    cells: Optional[int] = Field(None, ge=1)


class ExperimentConfig(_Strict):
    """Validated experiment description (one JSON document)."""

    model: Literal["P1Slab", "P3Slab", "P3PlaneParallel", "Custom"]
    custom: Optional[CustomModel] = None
    schemes: list[Scheme] = Field(default_factory=lambda: [Scheme.DG_Q1, Scheme.HYBRID, Scheme.FV2])
    epsilons: list[float] = Field(default_factory=lambda: [1.0])
    cells: list[int] = Field(default_factory=lambda: [100, 200, 400])
    sigma_t: float = Field(1.0, gt=0)
    sigma_a: float = Field(0.0, ge=0)
    source: Optional[list[float]] = None
    time: TimeSection = TimeSection()
    reference: ReferenceSection = ReferenceSection()
    solver: Literal["auto", "lu", "fft"] = "auto"
    jobs: int = Field(1, ge=1)

    @field_validator("epsilons")
    @classmethod
    def _positive_eps(cls, v):
        if not v:
            raise ValueError("at least one epsilon is required")
        for e in v:
            if not e > 0:
                raise ValueError(f"epsilon must be positive, got {e}")
        return v

    @field_validator("cells")
    @classmethod
    def _positive_cells(cls, v):
        if not v or any(c < 1 for c in v):
            raise ValueError("cells must be a non-empty list of positive integers")
        return v

    @model_validator(mode="after")
    def _custom_present(self):
        if self.model == "Custom" and self.custom is None:
            raise ValueError("model 'Custom' needs a 'custom' section")
        if self.model != "Custom" and self.custom is not None:
            raise ValueError("'custom' is only allowed with model 'Custom'")
        return self

    @property
    def time_config(self) -> TimeConfig:
        return TimeConfig(self.time.bdf_order, self.time.dt_factor, self.time.final_time)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            path = ".".join(str(p) for p in err["loc"]) or "<root>"
            msgs.append(f"{path}: {err['msg']}")
        raise ConfigError("; ".join(msgs)) from None


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON experiment file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    geometry: Geometry
    degree: int
    initial: str

    @property
    def dimension(self) -> int:
        return self.geometry.space_dimension

    def flux(self) -> FluxSet:
        return flux_set(self.geometry, self.degree)


def resolve_model(cfg: ExperimentConfig) -> ModelSpec:
    if cfg.model == "Custom":
        c = cfg.custom
        spec = ModelSpec("Custom", Geometry(c.geometry), c.N, c.initial)
    else:
        spec = ModelSpec(cfg.model, *_PRESETS[cfg.model])
    two_d = spec.initial == "sine2d"
    if two_d != (spec.dimension == 2):
        raise ConfigError(f"custom.initial: profile '{spec.initial}' does not match "
                          f"geometry '{spec.geometry.value}'")
    return spec


def initial_profile(name: str) -> Callable:
    return PROFILES[name]


def _grid(spec: ModelSpec, cells: int) -> Grid:
    return build_grid(spec.dimension, cells, cells if spec.dimension == 2 else None)


def run_single(cfg: ExperimentConfig, spec: ModelSpec, scheme: Scheme | str, eps: float,
               cells: int) -> State:
    """Transient run of one (scheme, epsilon, cells) row to the final time."""
    flux = spec.flux()
    grid = _grid(spec, cells)
    source = None
    if cfg.source is not None:
        if len(cfg.source) != flux.moment_count:
            raise ConfigError(f"source: expected {flux.moment_count} moment values")
        source = np.asarray(cfg.source, dtype=float)
    problem = TransportProblem(Scheme(scheme), flux, grid,
                               Material(eps, cfg.sigma_t, cfg.sigma_a), source)
    layout = dof_layout(scheme, flux.basis, grid)
    initial = project(layout, initial_profile(spec.initial))
    return run_transient(problem, initial, cfg.time_config, solver=cfg.solver)


# ---------------------------------------------------------------------------
# field comparisons


def _gauss_points(grid: Grid):
    """Two-point Gauss nodes and weights on every cell of ``grid``."""
    g = np.array([-1.0, 1.0]) / math.sqrt(3.0)
    cx = (np.arange(grid.cells_x) + 0.5) * grid.h_x
    x1 = (cx[:, None] + 0.5 * grid.h_x * g[None, :]).ravel()
    if grid.dimension == 1:
        return (x1,), np.full(x1.size, grid.h_x / 2.0)
    cz = (np.arange(grid.cells_z) + 0.5) * grid.h_z
    z1 = (cz[:, None] + 0.5 * grid.h_z * g[None, :]).ravel()
    X, Z = np.meshgrid(x1, z1, indexing="ij")
    return (X.ravel(), Z.ravel()), np.full(X.size, grid.cell_volume / 4.0)


def _finer_grid(a: Grid, b: Grid) -> Grid:
    if a.dimension != b.dimension:
        raise DomainError("fields live on grids of different dimension")
    fine, coarse = (a, b) if a.n_cells >= b.n_cells else (b, a)
    if fine.cells_x % coarse.cells_x or fine.cells_z % coarse.cells_z:
        raise DomainError(f"grid {coarse.shape} does not divide grid {fine.shape}")
    return fine


def l2_error(run, reference) -> float:
    """L2 distance of two density fields, integrated on the finer of the two grids.

    Both arguments expose ``grid`` and ``evaluate(x[, z])``; the coarser grid
    must divide the finer one so that both are polynomial on each quadrature
    cell, which makes two-point Gauss integration exact.
    """
    grid = _finer_grid(run.grid, reference.grid)
    pts, w = _gauss_points(grid)
    d = run.evaluate(*pts) - reference.evaluate(*pts)
    return float(math.sqrt(np.sum(w * d * d)))


def l2_norm(field_) -> float:
    pts, w = _gauss_points(field_.grid)
    v = field_.evaluate(*pts)
    return float(math.sqrt(np.sum(w * v * v)))


def field_variance(field_) -> float:
    """Spatial variance ``int (rho - mean)^2`` over the unit domain."""
    pts, w = _gauss_points(field_.grid)
    v = field_.evaluate(*pts)
    mean = np.sum(w * v)
    return float(np.sum(w * (v - mean) ** 2))


def higher_moment_norm(state: State) -> float:
    """Sum over the moments of degree >= 1 of the L2 norm of their cell averages."""
    avg = state.averages()
    norms = np.sqrt(state.grid.cell_volume * np.sum(avg[:, 1:] ** 2, axis=0))
    return float(norms.sum())


# ---------------------------------------------------------------------------
# studies


@dataclass(frozen=True)
class ErrorRow:
    model: str
    scheme: str
    epsilon: float
    cells: int
    h: float
    l2_error_rho: float
    rate: Optional[float] = None


@dataclass(frozen=True)
class LimitRow:
    model: str
    scheme: str
    epsilon: float
    cells: int
    rel_l2_to_diffusion: float
    variance_ratio: float
    higher_moment_norm: float


def _map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _reference_cells(cfg: ExperimentConfig, spec: ModelSpec, desk: bool) -> int:
    cells = cfg.reference.cells or REFERENCE_CELLS[spec.dimension]
    return max(1, cells // 2) if desk else cells


def run_convergence(cfg: ExperimentConfig, desk: bool = False) -> list[ErrorRow]:
    """Errors of every (scheme, epsilon, cells) row against a fine DG reference.

    ``desk`` halves the reference resolution; run resolutions that are no
    longer strictly coarser are skipped.
    """
    spec = resolve_model(cfg)
    ref_cells = _reference_cells(cfg, spec, desk)
    cells = [c for c in cfg.cells if c < ref_cells and ref_cells % c == 0]
    skipped = sorted(set(cfg.cells) - set(cells))
    if skipped:
        log.warning("skipping resolutions %s: not strictly coarser than %d", skipped, ref_cells)
    rows = []
    for eps in cfg.epsilons:
        ref = run_single(cfg, spec, cfg.reference.scheme, eps, ref_cells)
        tasks = [(cfg, spec, s, eps, c) for s in cfg.schemes for c in cells]
        states = _map(run_single, tasks, cfg.jobs)
        for (_, _, s, _, c), state in zip(tasks, states):
            rows.append(ErrorRow(spec.name, Scheme(s).value, eps, c, 1.0 / c,
                                 l2_error(state, ref)))
    return convergence_rates(rows)


def convergence_rates(rows: Sequence[ErrorRow]) -> list[ErrorRow]:
    """Fill ``rate = log2(e_2h / e_h)`` between consecutive halved-h rows of a group."""
    out = []
    prev = None
    for r in rows:
        rate = None
        if (prev is not None and (prev.model, prev.scheme, prev.epsilon) == (r.model, r.scheme, r.epsilon)
                and math.isclose(prev.h, 2.0 * r.h) and prev.l2_error_rho > 0 and r.l2_error_rho > 0):
            rate = math.log2(prev.l2_error_rho / r.l2_error_rho)
        out.append(ErrorRow(r.model, r.scheme, r.epsilon, r.cells, r.h, r.l2_error_rho, rate))
        prev = r
    return out


def diffusion_reference(cfg: ExperimentConfig, spec: ModelSpec, cells: int) -> DiffusionField:
    """Limit-equation solution for the model's initial density.

    The density is the angular average of the intensity, so the scalar flux
    is ``4 pi rho`` and the source average is the zeroth source moment.
    """
    grid = _grid(spec, cells)
    f0 = cfg.source[0] if cfg.source else 0.0
    prof = initial_profile(spec.initial)
    phi = solve_diffusion_reference(
        grid, cfg.sigma_t, cfg.sigma_a, lambda *c: 4.0 * math.pi * prof(*c),
        cfg.time.final_time, cfg.time.dt_factor * grid.h, mean_source=f0,
        bdf_order=cfg.time.bdf_order)
    return DiffusionField(grid, phi.values / (4.0 * math.pi))


def limit_check(cfg: ExperimentConfig, desk: bool = False) -> list[LimitRow]:
    """Compare every run with the diffusion-limit solution on the reference grid."""
    spec = resolve_model(cfg)
    ref_cells = _reference_cells(cfg, spec, desk)
    cells = [c for c in cfg.cells if ref_cells % c == 0]
    diff = diffusion_reference(cfg, spec, ref_cells)
    norm = l2_norm(diff)
    var = field_variance(diff)
    tasks = [(cfg, spec, s, e, c) for e in cfg.epsilons for s in cfg.schemes for c in cells]
    states = _map(run_single, tasks, cfg.jobs)
    rows = []
    for (_, _, s, e, c), state in zip(tasks, states):
        rows.append(LimitRow(spec.name, Scheme(s).value, e, c,
                             l2_error(state, diff) / norm,
                             field_variance(state) / var if var > 0 else float("nan"),
                             higher_moment_norm(state)))
    return rows


# ---------------------------------------------------------------------------
# output

ERROR_COLUMNS = ("model", "scheme", "epsilon", "cells", "h", "l2_error_rho", "rate")
LIMIT_COLUMNS = ("model", "scheme", "epsilon", "cells", "rel_l2_to_diffusion",
                 "variance_ratio", "higher_moment_norm")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(report: Sequence[ErrorRow], out_dir, svg: bool = True) -> list[Path]:
    """Write ``errors.csv`` and one log-log SVG plot per (model, epsilon)."""
    if not report:
        raise DomainError("cannot emit an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "errors.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERROR_COLUMNS)
        for r in report:
            w.writerow([_fmt(getattr(r, c)) for c in ERROR_COLUMNS])
    written = [path]
    if svg:
        written += _plot(report, out)
    return written


def emit_limit(report: Sequence[LimitRow], out_dir) -> Path:
    if not report:
        raise DomainError("cannot emit an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "limit.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LIMIT_COLUMNS)
        for r in report:
            w.writerow([_fmt(getattr(r, c)) for c in LIMIT_COLUMNS])
    return path


def _plot(report: Sequence[ErrorRow], out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "pnkit"
    groups: dict[tuple[str, float], list[ErrorRow]] = {}
    for r in report:
        groups.setdefault((r.model, r.epsilon), []).append(r)
    paths = []
    for (model, eps), rows in groups.items():
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        for scheme in dict.fromkeys(r.scheme for r in rows):
            sel = [r for r in rows if r.scheme == scheme]
            ax.loglog([r.h for r in sel], [r.l2_error_rho for r in sel], "o-", label=scheme)
        hs = sorted({r.h for r in rows})
        if len(hs) > 1:
            e0 = min(r.l2_error_rho for r in rows if r.h == hs[-1])
            ax.loglog(hs, [e0 * (h / hs[-1]) ** 2 for h in hs], "k--", lw=0.8, label="h^2")
        ax.set_xlabel("h")
        ax.set_ylabel("L2 error of rho")
        ax.set_title(f"{model}, eps = {eps:g}")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out / f"errors_{model}_eps{eps:g}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def write_field(state: State, path) -> None:
    """Density at the cell centers as ``x[, z], rho`` CSV."""
    centers = state.grid.centers()
    rho = state.evaluate(*centers)
    header = ["x", "rho"] if len(centers) == 1 else ["x", "z", "rho"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*centers, rho):
            w.writerow([repr(float(v)) for v in row])
