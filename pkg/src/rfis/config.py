"""Run configuration: schema, loading and system assembly."""

from __future__ import annotations

import json
import warnings
from pathlib import Path
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, field_validator

from .core import RifsSystem, build_scale_field, build_system
from .errors import ConfigError, NonUniformSpacing, RfisError
from .grid import (
    AffinePlanarMap,
    DomainLayout,
    DomainSpec,
    GridData,
    Region,
    gamma_identity_block,
    gamma_opposite_quadrant,
    normalize,
    quadrant_domains,
    read_grid_csv,
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _region_key(key: str) -> Region:
    try:
        i, j = (int(p) for p in key.split(","))
    except ValueError:
        raise ValueError(f"region key must look like 'i,j', got {key!r}") from None
    return (i, j)


class DomainModel(_Strict):
    sx: int
    ex: int
    sy: int
    ey: int


class ScaleTable(_Strict):
    default: str | None = None
    regions: dict[str, str] = Field(default_factory=dict)


class RenderModel(_Strict):
    depth: int = Field(6, ge=0, le=12)
    tol: float = Field(1e-10, gt=0)
    max_iters: int = Field(200, ge=1)


class ChaosModel(_Strict):
    enabled: bool = False
    count: int = Field(100_000, ge=1)
    seed: int = 0
    burn_in: int = Field(100, ge=0)
    chains: int | None = Field(None, ge=1)


class DimModel(_Strict):
    r_min: int = Field(3, ge=0)
    r_max: int = Field(6, ge=1)
    density: int = Field(64, ge=64)
    depth: int | None = Field(None, ge=0, le=12)
    min_oversample: int = Field(2, ge=0)


class VerifyModel(_Strict):
    samples_per_edge: int = Field(33, ge=2)
    tol: float = 1e-9
    depth: int = Field(4, ge=0, le=10)


class OutputsModel(_Strict):
    dir: str = "out"
    matrices: bool = True
    surface_csv: bool = True
    pgm: bool = True
    obj: bool = False
    svg: bool = True


class RunConfig(_Strict):
    grid: str
    layout: Union[Literal["quadrants"], list[DomainModel]] = "quadrants"
    gamma: Union[Literal["opposite-quadrant", "identity-block"], dict[str, int]] = "opposite-quadrant"
    scale: Union[str, ScaleTable]
    base: Literal["bilinear", "lagrange"] = "bilinear"
    residual: Literal["coons", "g0"] = "coons"
    orientations: Union[Literal["default"], dict[str, tuple[str, str]]] = "default"
    density: int = Field(64, ge=2)
    pad: float = Field(0.0, ge=0)
    force: bool = False
    perturb_q: dict[str, float] = Field(default_factory=dict)
    render: RenderModel = Field(default_factory=RenderModel)
    chaos: ChaosModel = Field(default_factory=ChaosModel)
    dim: DimModel = Field(default_factory=DimModel)
    verify: VerifyModel = Field(default_factory=VerifyModel)
    outputs: OutputsModel = Field(default_factory=OutputsModel)

    @field_validator("orientations")
    @classmethod
    def _check_orientations(cls, v):
        if isinstance(v, dict):
            for key, pair in v.items():
                _region_key(key)
                for o in pair:
                    if o not in ("increasing", "decreasing"):
                        raise ValueError(f"bad orientation {o!r} for region {key}")
        return v


def load_config(path: str | Path) -> tuple[RunConfig, Path]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return RunConfig.model_validate(raw), path.parent
    except PydanticError as exc:
        raise ConfigError(f"{path}: {exc}") from None


class Prepared:
    """A config resolved into grid, layout and system."""

    def __init__(self, cfg: RunConfig, grid: GridData, planar: AffinePlanarMap,
                 uniform: bool, system: RifsSystem, captured: list[str]):
        self.cfg = cfg
        self.grid = grid
        self.planar = planar
        self.uniform = uniform
        self.system = system
        self.warnings = captured


def _layout(cfg: RunConfig, grid: GridData) -> DomainLayout:
    if cfg.layout == "quadrants":
        domains = quadrant_domains(grid.n, grid.m)
    else:
        domains = tuple(DomainSpec(d.sx, d.ex, d.sy, d.ey) for d in cfg.layout)
    if cfg.gamma == "opposite-quadrant":
        gamma = gamma_opposite_quadrant(grid, domains)
    elif cfg.gamma == "identity-block":
        gamma = gamma_identity_block(grid, domains)
    else:
        try:
            gamma = {_region_key(k): v for k, v in cfg.gamma.items()}
        except ValueError as exc:
            raise ConfigError(f"gamma: {exc}") from None
    return DomainLayout(domains, gamma)


def _scale_exprs(cfg: RunConfig, grid: GridData) -> dict[Region, str]:
    if isinstance(cfg.scale, str):
        return {r: cfg.scale for r in grid.regions()}
    table = {_region_key(k): v for k, v in cfg.scale.regions.items()}
    out = {}
    for r in grid.regions():
        text = table.get(r, cfg.scale.default)
        if text is None:
            raise ConfigError(f"scale: no expression for region {r} and no default")
        out[r] = text
    return out


def prepare(cfg: RunConfig, base_dir: Path) -> Prepared:
    grid_path = Path(cfg.grid)
    if not grid_path.is_absolute():
        grid_path = base_dir / grid_path
    try:
        raw = read_grid_csv(grid_path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"grid {grid_path.name}: {exc}") from None
    try:
        grid, planar = normalize(raw)
        uniform = True
    except NonUniformSpacing:
        grid, planar, uniform = raw, AffinePlanarMap(), False
    layout = _layout(cfg, grid)
    orient = {}
    if isinstance(cfg.orientations, dict):
        orient = {_region_key(k): tuple(v) for k, v in cfg.orientations.items()}
    q = {_region_key(k): v for k, v in cfg.perturb_q.items()}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        scale = build_scale_field(grid, _scale_exprs(cfg, grid), cfg.density, cfg.pad)
        system = build_system(grid, layout, scale, cfg.base, orient, force=cfg.force,
                              q_offsets=q, residual=cfg.residual)
    return Prepared(cfg, grid, planar, uniform, system, [str(w.message) for w in caught])


def prepare_path(path: str | Path) -> Prepared:
    cfg, base = load_config(path)
    try:
        return prepare(cfg, base)
    except RfisError as exc:
        exc.args = (f"{path}: {exc}",) + exc.args[1:]
        raise
