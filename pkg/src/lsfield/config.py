"""Run configuration: JSON document validated with pydantic."""

from __future__ import annotations

import difflib
import json
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from lsfield.lattice import LatticeConfig
from lsfield.potential import DEFAULT_A, DEFAULT_B, PairPotential
from lsfield.recovery import StressLSConfig
from lsfield.reference import QCReferenceLattice
from lsfield.scenarios import Experiment, ScenarioSpec
from lsfield.statics import RelaxParams


class ConfigError(ValueError):
    """Base class for configuration problems."""

    kind = "config"


class ConfigFileNotFound(ConfigError):
    kind = "missing-file"


class ConfigSyntaxError(ConfigError):
    kind = "malformed-json"


class ConfigValueError(ConfigError):
    kind = "invalid-value"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PotentialSection(_Section):
    A: float = Field(DEFAULT_A, gt=0)
    B: float = Field(DEFAULT_B, gt=0)
    r_cut: float = Field(3.0, gt=0)


class LatticeSection(_Section):
    a: float = Field(4.0, gt=0)
    cells: List[int] = Field(default_factory=lambda: [8, 8, 8])

    @field_validator("cells")
    @classmethod
    def _cells(cls, v):
        if len(v) != 3 or any(n < 1 for n in v):
            raise ValueError("cells must be three positive integers")
        return v


class RecoverySection(_Section):
    penalty_scale: float = Field(1e5, ge=0)
    penalty: Optional[float] = Field(None, ge=0)
    area_mode: Literal["sphere-fraction"] = "sphere-fraction"
    qc_volume_mode: Literal["atomic", "half-cutoff-sphere"] = "atomic"
    push_forward: Literal["PFt", "PF"] = "PFt"


class RelaxSection(_Section):
    force_tolerance: float = Field(1e-8, gt=0)
    max_iterations: int = Field(50000, ge=1)
    restart_interval: Optional[int] = Field(None, ge=1)
    max_step: float = Field(0.2, gt=0)


class OutputSection(_Section):
    directory: str = "run"
    vtk: bool = True
    csv: bool = True


class RunConfig(_Section):
    potential: PotentialSection = Field(default_factory=PotentialSection)
    lattice: LatticeSection = Field(default_factory=LatticeSection)
    scenario: ScenarioSpec = Field(default_factory=ScenarioSpec)
    recovery: RecoverySection = Field(default_factory=RecoverySection)
    relax: RelaxSection = Field(default_factory=RelaxSection)
    output: OutputSection = Field(default_factory=OutputSection)
    threads: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _cutoff(self):
        if not self.potential.r_cut < self.lattice.a:
            raise ValueError("potential.r_cut must be smaller than lattice.a")
        nn = self.lattice.a / 2**0.5
        if not self.potential.r_cut >= nn:
            raise ValueError(f"potential.r_cut must reach the nearest-neighbour distance {nn:.6g}")
        return self

    def experiment(self, threads: int | None = None, trace=None) -> Experiment:
        lat = LatticeConfig(a=self.lattice.a, nx=self.lattice.cells[0], ny=self.lattice.cells[1],
                            nz=self.lattice.cells[2], r_cut=self.potential.r_cut)
        return Experiment(
            potential=PairPotential(A=self.potential.A, B=self.potential.B),
            lattice=lat,
            stress=StressLSConfig(penalty_scale=self.recovery.penalty_scale, penalty=self.recovery.penalty,
                                  area_mode=self.recovery.area_mode),
            relax=RelaxParams(**self.relax.model_dump()),
            qc=QCReferenceLattice(a=lat.a, r_cut=lat.r_cut, volume_mode=self.recovery.qc_volume_mode),
            push_forward=self.recovery.push_forward,
            threads=threads or self.threads,
            trace=trace,
        )


def _all_keys(model=None, prefix=()):
    """(path, key) for every field of the schema, depth first."""
    model = model or RunConfig
    for key, info in model.model_fields.items():
        yield prefix, key
        ann = info.annotation
        if isinstance(ann, type) and issubclass(ann, BaseModel):
            yield from _all_keys(ann, prefix + (key,))


def nearest_key(loc) -> str:
    """Closest valid dotted key to the unknown key at ``loc``; same-level keys win ties."""
    bad, parent = str(loc[-1]), tuple(str(p) for p in loc[:-1])

    def score(item):
        path, key = item
        return (difflib.SequenceMatcher(None, bad.lower(), key.lower()).ratio(), path == parent)

    path, key = max(_all_keys(), key=score)
    return ".".join(path + (key,))


def _describe(err) -> str:
    loc = tuple(str(p) for p in err["loc"])
    name = ".".join(loc) or "<root>"
    if err["type"] == "extra_forbidden":
        return f"unknown key '{name}'; did you mean '{nearest_key(loc)}'?"
    return f"{name}: {err['msg']}"


def config_from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigValueError("configuration must be a JSON object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigValueError("; ".join(_describe(e) for e in exc.errors())) from None


def parse_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    if not path.is_file():
        raise ConfigFileNotFound(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)
