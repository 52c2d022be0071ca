"""Experiment definitions and runners: uniform loading, tensile sweep, crack,
edge dislocation and indentation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from lsfield import tensor
from lsfield.lattice import (
    AtomSystem,
    LatticeConfig,
    build_fcc,
    nn_vectors,
    rebuild_neighbors_current,
)
from lsfield.potential import PairPotential
from lsfield.recovery import FieldRecovery, FieldSnapshot, StressLSConfig, interior_stats
from lsfield.reference import QCReferenceLattice, boundary_stress, qc_stress
from lsfield.statics import RelaxationError, RelaxParams, apply_uniform_bc, relax

log = logging.getLogger(__name__)

COMBINED_STRAIN = [[0.010, 0.010, -0.008], [0.010, 0.010, 0.010], [-0.008, 0.010, 0.020]]
MAX_STRAIN = 0.1
SINGLE_STEP_LIMIT = 0.02
LOAD_INCREMENT = 0.01

# vacancy offsets (units of a) from the top-surface center: the layer just
# under the indenter, below the footprint edges
INDENT_VACANCIES = [[1.0, 0.5, -0.5], [-1.0, 0.5, -0.5], [1.0, -0.5, -0.5], [-1.0, -0.5, -0.5]]

Kind = Literal["uniform", "tensile", "crack", "dislocation", "indentation"]


class ScenarioSpec(BaseModel):
    """Declarative description of one experiment.

    Lengths given as fractions are in units of the lattice constant.
    ``cells`` overrides the lattice block size for this run only.
    """

    model_config = ConfigDict(extra="forbid")

    kind: Kind = "uniform"
    cells: Optional[List[int]] = None
    seed: Optional[int] = None

    # uniform
    strain: List[List[float]] = Field(default_factory=lambda: [row[:] for row in COMBINED_STRAIN])
    # tensile
    e33_min: float = -0.1
    e33_max: float = 0.1
    steps: int = Field(20, ge=2)
    # crack
    pull: float = 0.02
    crack_fraction: float = Field(0.5, gt=0.0, lt=1.0)
    corner_radius: float = Field(1.0, gt=0.0)
    # dislocation
    burgers: List[float] = Field(default_factory=lambda: [0.5, 0.5, 0.0])
    poisson: float = Field(0.3, gt=-1.0, lt=0.5)
    # indentation
    footprint: float = Field(2.0, gt=0.0)
    depth: float = Field(0.5, ge=0.0)
    increments: int = Field(5, ge=1)
    vacancies: List[List[float]] = Field(default_factory=list)

    @field_validator("cells")
    @classmethod
    def _cells(cls, v):
        if v is not None and (len(v) != 3 or any(n < 1 for n in v)):
            raise ValueError("cells must be three positive integers")
        return v

    @field_validator("strain")
    @classmethod
    def _strain(cls, v):
        E = np.asarray(v, dtype=float)
        if E.shape != (3, 3):
            raise ValueError("strain must be a 3x3 matrix")
        if np.max(np.abs(E - E.T)) > 1e-12:
            raise ValueError("strain must be symmetric")
        if np.max(np.abs(E)) > MAX_STRAIN:
            raise ValueError(f"strain components must satisfy |E| <= {MAX_STRAIN}")
        return v

    @field_validator("e33_min", "e33_max", "pull")
    @classmethod
    def _range(cls, v):
        if abs(v) > MAX_STRAIN:
            raise ValueError(f"must satisfy |value| <= {MAX_STRAIN}")
        return v

    @field_validator("burgers")
    @classmethod
    def _burgers(cls, v):
        if len(v) != 3 or not any(v):
            raise ValueError("burgers must be a non-zero 3-vector (units of a)")
        return v

    @field_validator("vacancies")
    @classmethod
    def _vacancies(cls, v):
        if any(len(o) != 3 for o in v):
            raise ValueError("each vacancy offset must have three components")
        return v

    @model_validator(mode="after")
    def _sweep(self):
        if not self.e33_min < self.e33_max:
            raise ValueError("e33_min must be below e33_max")
        return self


@dataclass
class Experiment:
    """Shared numerical settings for scenario runs."""

    potential: PairPotential = field(default_factory=PairPotential)
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    stress: StressLSConfig = field(default_factory=StressLSConfig)
    relax: RelaxParams = field(default_factory=RelaxParams)
    qc: QCReferenceLattice = None
    push_forward: str = "PFt"
    threads: int = 1
    trace: Optional[Callable] = None  # trace(step, iteration, energy, residual)

    def __post_init__(self):
        if self.qc is None:
            self.qc = QCReferenceLattice(a=self.lattice.a, r_cut=self.lattice.r_cut)

    def lattice_for(self, spec: ScenarioSpec, default_cells=None):
        cells = spec.cells or default_cells
        if cells is None:
            return self.lattice
        return replace(self.lattice, nx=cells[0], ny=cells[1], nz=cells[2])

    def metadata(self):
        return {
            "force_tolerance": self.relax.force_tolerance,
            "max_iterations": self.relax.max_iterations,
            "minimizer": "Polak-Ribiere nonlinear CG, bracketing line search",
            "penalty_scale": self.stress.penalty_scale,
            "penalty": self.stress.penalty,
            "qc_volume_mode": self.qc.volume_mode,
            "qc_volume": self.qc.volume,
            "push_forward": self.push_forward,
        }


@dataclass
class ScenarioResult:
    kind: str
    summary: dict
    system: AtomSystem = None
    fields: FieldSnapshot = None
    curve: list = None
    trace: list = field(default_factory=list)  # (step, iteration, energy, residual)
    partial: bool = False
    error: str = None


class _Runner:
    def __init__(self, ctx: Experiment):
        self.ctx = ctx
        self.trace = []
        self.steps = []

    def relax(self, sys, step):
        def cb(it, e, res):
            self.trace.append((step, it, e, res))
            if self.ctx.trace is not None:
                self.ctx.trace(step, it, e, res)

        res = relax(sys, self.ctx.potential, self.ctx.relax, trace=cb)
        self.steps.append({"step": step, **res.metadata()})
        return res.system

    def recover(self, sys, op=None):
        op = op or FieldRecovery(sys, self.ctx.potential, self.ctx.stress, self.ctx.threads)
        return op(sys)


def load_increments(E, increment=LOAD_INCREMENT, single_step_limit=SINGLE_STEP_LIMIT):
    """Strain states of a proportional loading path ending at ``E``."""
    E = np.asarray(E, dtype=float)
    peak = float(np.max(np.abs(E)))
    if peak <= single_step_limit:
        return [E]
    n = math.ceil(peak / increment - 1e-9)
    return [E * k / n for k in range(1, n + 1)]


def _stats_block(values, mask, ref=None):
    mean, std = interior_stats(values, mask)
    out = {"mean": mean.tolist(), "std": std.tolist()}
    if ref is not None:
        ref = np.asarray(ref, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            err = np.where(ref != 0, (mean - ref) / np.abs(ref) * 100.0, np.nan)
        out["err_pct"] = err.tolist()
    return out


def _antisymmetry_max(fields):
    a = fields.antisymmetry("raw")
    return float(np.nanmax(a)) if np.any(~np.isnan(a)) else 0.0


def _common(fields):
    return {
        "n_atoms": int(len(fields.n_p)),
        "n_interior": int(fields.valid.sum()),
        "n_undefined": int((fields.status != 0).sum()),
        "antisymmetry_max": _antisymmetry_max(fields),
    }


# --------------------------------------------------------------------- uniform


def run_uniform(spec: ScenarioSpec, ctx: Experiment = None) -> ScenarioResult:
    """Uniform strain on the boundary, relaxation, recovery and both references."""
    ctx = ctx or Experiment()
    run = _Runner(ctx)
    sys = build_fcc(ctx.lattice_for(spec))
    E = np.asarray(spec.strain, dtype=float)
    F = tensor.stretch_from_strain(E)
    for k, Ek in enumerate(load_increments(E)):
        sys = run.relax(apply_uniform_bc(sys, tensor.stretch_from_strain(Ek)), k)
    fields = run.recover(sys)
    p = ctx.potential
    bs = boundary_stress(sys, p)
    ref6 = tensor.sym6(bs.sigma)
    qc6 = tensor.sym6(qc_stress(F, p, ctx.qc, ctx.push_forward))
    mask = fields.valid
    summary = {
        "strain_applied": tensor.sym6(E).tolist(),
        "F_applied": tensor.flatten(F).tolist(),
        "strain": _stats_block(fields.E, mask, tensor.sym6(E)),
        "stress": {
            "ref": ref6.tolist(),
            "ref_spread": tensor.sym6(bs.spread).tolist(),
            "ref_asymmetry": bs.asymmetry,
            "qc": qc6.tolist(),
            "raw": _stats_block(fields.sigma_raw, mask, ref6),
            "avg": _stats_block(fields.sigma_avg, mask, ref6),
            "raw_vs_qc_pct": _stats_block(fields.sigma_raw, mask, qc6)["err_pct"],
            "avg_vs_qc_pct": _stats_block(fields.sigma_avg, mask, qc6)["err_pct"],
        },
        **_common(fields),
        "relax_steps": run.steps,
    }
    return ScenarioResult("uniform", summary, sys, fields, trace=run.trace)


# --------------------------------------------------------------------- tensile


def tensile_schedule(spec: ScenarioSpec):
    """Strain states of the sweep: ramps from 0 to each end in equal steps."""
    inc = (spec.e33_max - spec.e33_min) / spec.steps
    up = [k * inc for k in range(1, int(round(spec.e33_max / inc)) + 1)] if spec.e33_max > 0 else []
    down = [-k * inc for k in range(1, int(round(-spec.e33_min / inc)) + 1)] if spec.e33_min < 0 else []
    return up, down


def run_tensile(spec: ScenarioSpec, ctx: Experiment = None) -> ScenarioResult:
    """Uniaxial sweep in E33; each state is relaxed from the previous one."""
    ctx = ctx or Experiment()
    run = _Runner(ctx)
    p = ctx.potential
    base = build_fcc(ctx.lattice_for(spec))
    op = FieldRecovery(base, p, ctx.stress, ctx.threads)
    rows = {}
    step = 0
    last = None

    def sample(sys, e33):
        F = tensor.stretch_from_strain(np.diag([0.0, 0.0, e33]))
        fields = run.recover(sys, op)
        m_avg, _ = interior_stats(fields.sigma_avg, fields.valid)
        m_raw, _ = interior_stats(fields.sigma_raw, fields.valid)
        rows[e33] = {
            "E33": e33,
            "sigma33_recovered": float(m_avg[2]),
            "sigma33_raw": float(m_raw[2]),
            "sigma33_ref": float(boundary_stress(sys, p).sigma[2, 2]),
            "sigma33_qc": float(qc_stress(F, p, ctx.qc, ctx.push_forward)[2, 2]),
            "antisymmetry_max": _antisymmetry_max(fields),
        }
        return fields

    error = None
    last = (base, sample(run.relax(base, step), 0.0))
    up, down = tensile_schedule(spec)
    try:
        for branch in (up, down):
            sys = base
            for e33 in branch:
                step += 1
                F = tensor.stretch_from_strain(np.diag([0.0, 0.0, e33]))
                sys = run.relax(apply_uniform_bc(sys, F), step)
                last = (sys, sample(sys, e33))
    except RelaxationError as exc:
        log.error("tensile sweep aborted: %s", exc)
        error = str(exc)
    curve = [rows[k] for k in sorted(rows)]
    s33 = np.array([r["sigma33_recovered"] for r in curve])
    summary = {
        "n_rows": len(curve),
        "monotone": bool(np.all(np.diff(s33) > 0)),
        "relax_steps": run.steps,
        **_common(last[1]),
    }
    return ScenarioResult(
        "tensile", summary, last[0], last[1], curve=curve, trace=run.trace,
        partial=error is not None, error=error,
    )


# ----------------------------------------------------------------------- crack


def nearest_plane(value, a):
    return round(value / (a / 2.0)) * (a / 2.0)


def run_crack(spec: ScenarioSpec, ctx: Experiment = None) -> ScenarioResult:
    """Plate with one removed (001) layer, pulled along z.

    The ``x`` and ``z`` faces are held at the uniaxial deformation; the
    ``y`` faces (plate surfaces) are free.
    """
    ctx = ctx or Experiment()
    run = _Runner(ctx)
    cfg = ctx.lattice_for(spec, default_cells=(12, 3, 12))
    a = cfg.a
    sys = build_fcc(cfg)
    L = sys.box_hi - sys.box_lo
    z_mid = nearest_plane(sys.box_lo[2] + 0.5 * L[2], a)
    margin = 0.5 * (1.0 - spec.crack_fraction) * L[0]
    tol = 1e-9 * a
    X = sys.X
    cut = (
        (np.abs(X[:, 2] - z_mid) < tol)
        & (X[:, 0] >= sys.box_lo[0] + margin - tol)
        & (X[:, 0] <= sys.box_hi[0] - margin + tol)
    )
    if not cut.any():
        raise ValueError("crack does not remove any atoms")
    tips = (X[cut, 0].min() - a / 4.0, X[cut, 0].max() + a / 4.0)
    sys = sys.delete_atoms(np.flatnonzero(cut))
    X = sys.X
    sys.fixed = np.zeros(sys.n_atoms, dtype=bool)
    for axis in (0, 2):
        sys.fixed |= np.abs(X[:, axis] - sys.box_lo[axis]) < tol
        sys.fixed |= np.abs(X[:, axis] - sys.box_hi[axis]) < tol

    E = np.diag([0.0, 0.0, spec.pull])
    for k, Ek in enumerate(load_increments(E)):
        sys = run.relax(apply_uniform_bc(sys, tensor.stretch_from_strain(Ek)), k)
    fields = run.recover(sys)
    vm = fields.vm_avg

    d_tip = np.minimum(
        np.hypot(X[:, 0] - tips[0], X[:, 2] - z_mid), np.hypot(X[:, 0] - tips[1], X[:, 2] - z_mid)
    )
    corner = d_tip <= spec.corner_radius * a
    face = (
        (np.abs(np.abs(X[:, 2] - z_mid) - a / 2.0) < tol)
        & (X[:, 0] >= tips[0] + a)
        & (X[:, 0] <= tips[1] - a)
    )
    k = int(np.nanargmax(vm))
    vm_max = float(vm[k])
    summary = {
        "crack_plane_z": z_mid,
        "crack_tips_x": list(tips),
        "removed_atoms": int(cut.sum()),
        "vm_max": vm_max,
        "vm_max_site": X[k].tolist(),
        "vm_max_tip_distance": float(d_tip[k]),
        "vm_max_on_corner": bool(corner[k]),
        "vm_corner_max": float(np.nanmax(vm[corner])),
        "vm_face_max": float(np.nanmax(vm[face])) if face.any() else 0.0,
        "face_to_max_ratio": float(np.nanmax(vm[face]) / vm_max) if face.any() and vm_max > 0 else 0.0,
        "n_corner_atoms": int(corner.sum()),
        "n_face_atoms": int(face.sum()),
        **_common(fields),
        "relax_steps": run.steps,
    }
    return ScenarioResult("crack", summary, sys, fields, trace=run.trace)


# ----------------------------------------------------------------- dislocation


def volterra_edge(points, core, burgers, normal, poisson):
    """Isotropic-elasticity displacement of a straight edge dislocation.

    ``burgers`` lies in the glide plane with unit ``normal``; the line runs
    along ``normal x burgers``. The displacement jump of ``burgers`` sits on
    the half plane behind the core (negative glide coordinate).
    """
    bvec = np.asarray(burgers, dtype=float)
    b = np.linalg.norm(bvec)
    e1 = bvec / b
    e2 = np.asarray(normal, dtype=float) / np.linalg.norm(normal)
    d = np.asarray(points, dtype=float) - np.asarray(core, dtype=float)
    x1 = d @ e1
    x2 = d @ e2
    r2 = x1 * x1 + x2 * x2
    if np.any(r2 == 0):
        raise ValueError("point on the dislocation line")
    nu = poisson
    theta = np.arctan2(x2, x1)
    u1 = b / (2 * np.pi) * (theta + x1 * x2 / (2 * (1 - nu) * r2))
    u2 = -b / (2 * np.pi) * (
        (1 - 2 * nu) / (4 * (1 - nu)) * np.log(r2 / b**2) + (x1 * x1 - x2 * x2) / (4 * (1 - nu) * r2)
    )
    return u1[:, None] * e1 + u2[:, None] * e2


def burgers_circuit(sys: AtomSystem, start, steps, tol=1e-6):
    """Walk bonds labelled by the given lattice vectors; return the closure
    failure ``X_end - X_start`` in reference coordinates."""
    k = start
    for v in steps:
        s = slice(sys.nbr_ptr[k], sys.nbr_ptr[k + 1])
        hit = np.flatnonzero(np.linalg.norm(sys.nbr_R[s] - v, axis=1) < tol)
        if len(hit) != 1:
            raise ValueError(f"no unique bond {v} from atom {k}")
        k = int(sys.nbr_j[s][hit[0]])
    return sys.X[k] - sys.X[start], k


def run_dislocation(spec: ScenarioSpec, ctx: Experiment = None) -> ScenarioResult:
    """Edge dislocation seeded with the Volterra field, then relaxed with the
    hull held at that field."""
    ctx = ctx or Experiment()
    run = _Runner(ctx)
    cfg = ctx.lattice_for(spec)
    a = cfg.a
    sys = build_fcc(cfg)
    bvec = np.asarray(spec.burgers, dtype=float) * a
    normal = np.array([0.0, 0.0, 1.0])
    if abs(bvec @ normal) > 1e-12:
        raise ValueError("Burgers vector must lie in the (001) glide plane")
    e1 = bvec / np.linalg.norm(bvec)
    xi = np.cross(normal, e1)
    centre = sys.box_lo + 0.5 * (sys.box_hi - sys.box_lo)
    # half an atomic row along b off the nearest site, and between (002) layers
    core = np.array([nearest_plane(c, a) for c in centre])
    core = core + (a / (2 * np.sqrt(2))) * e1 + np.array([0.0, 0.0, a / 4.0])
    sys.u = volterra_edge(sys.X, core, bvec, normal, spec.poisson)
    topology_cut = 0.5 * (cfg.nn_distance + cfg.a)
    sys = rebuild_neighbors_current(sys, topology_cut, nn_vectors(a))
    sys = run.relax(sys, 0)
    fields = run.recover(sys)

    d = sys.X - core
    x1, x2, along = d @ e1, d @ normal, d @ xi
    rho = np.hypot(x1, x2)
    szz = fields.sigma_avg[:, 2, 2]
    slab = np.abs(along) <= 2 * a
    rings = []
    for lo, hi in ((0.5, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0)):
        ring = slab & (rho >= lo * a) & (rho < hi * a)
        up, dn = ring & (x2 > 0), ring & (x2 < 0)
        rings.append({
            "r_min": lo * a,
            "r_max": hi * a,
            "mean_above": float(np.nanmean(szz[up])),
            "mean_below": float(np.nanmean(szz[dn])),
            "mean_abs": float(np.nanmean(np.abs(szz[ring]))),
            "n": int(ring.sum()),
        })
    near = slab & (rho >= 0.5 * a) & (rho < 2.0 * a)
    above = float(np.nanmean(szz[near & (x2 > 0)]))
    below = float(np.nanmean(szz[near & (x2 < 0)]))
    decay = [r["mean_abs"] for r in rings[1:]]

    # rectangular circuit in the plane normal to the line
    m, h = 4, 2
    v = np.array([a / 2, a / 2, 0.0]) if np.allclose(e1, [1, 1, 0] / np.sqrt(2)) else None
    closure = None
    if v is not None:
        w1, w2 = np.array([a / 2, 0, a / 2]), np.array([-a / 2, 0, a / 2])
        steps = [v] * m + [w1, w2] * h + [-v] * m + [-w2, -w1] * h
        target = core - (m / 2) * np.linalg.norm(v) * e1 - (h / 2) * a * normal
        start = int(np.argmin(np.linalg.norm(sys.X - target, axis=1)))
        try:
            closure = burgers_circuit(sys, start, steps)[0].tolist()
        except ValueError as exc:
            log.warning("Burgers circuit failed: %s", exc)
    summary = {
        "core": core.tolist(),
        "burgers": bvec.tolist(),
        "line_direction": xi.tolist(),
        "rings": rings,
        "near_core_mean_above": above,
        "near_core_mean_below": below,
        "sign_flip": bool(np.sign(above) == -np.sign(below) and above != 0),
        "far_field_decays": bool(np.all(np.diff(decay) < 0)),
        "burgers_closure": closure,
        "slip_bonds": int(fields.slip_bonds.sum()),
        **_common(fields),
        "relax_steps": run.steps,
    }
    return ScenarioResult("dislocation", summary, sys, fields, trace=run.trace)


# ----------------------------------------------------------------- indentation


def run_indentation(spec: ScenarioSpec, ctx: Experiment = None) -> ScenarioResult:
    """Rigid flat square punch pushed into the centre of the +z surface.

    Footprint atoms are displaced in ``increments`` equal steps; the bottom
    and side faces are clamped, the rest of the top surface is free.
    """
    ctx = ctx or Experiment()
    run = _Runner(ctx)
    cfg = ctx.lattice_for(spec)
    a = cfg.a
    sys = build_fcc(cfg)
    tol = 1e-9 * a
    top = np.array([*(sys.box_lo[:2] + 0.5 * (sys.box_hi[:2] - sys.box_lo[:2])), sys.box_hi[2]])
    top[:2] = [nearest_plane(c, a) for c in top[:2]]
    vac = [top + np.asarray(o, dtype=float) * a for o in spec.vacancies]
    if vac:
        sys = sys.delete_atoms([sys.find_site(q) for q in vac])
    X = sys.X
    half = 0.5 * spec.footprint * a
    foot = (
        (np.abs(X[:, 2] - top[2]) < tol)
        & (np.abs(X[:, 0] - top[0]) <= half + tol)
        & (np.abs(X[:, 1] - top[1]) <= half + tol)
    )
    clamp = np.abs(X[:, 2] - sys.box_lo[2]) < tol
    for axis in (0, 1):
        clamp |= np.abs(X[:, axis] - sys.box_lo[axis]) < tol
        clamp |= np.abs(X[:, axis] - sys.box_hi[axis]) < tol
    sys.fixed = clamp | foot
    depth = spec.depth * a
    for k in range(1, spec.increments + 1):
        sys = sys.copy()
        sys.u[foot, 2] = -depth * k / spec.increments
        sys = run.relax(sys, k)
    fields = run.recover(sys)
    vm = fields.vm_avg
    k = int(np.nanargmax(vm)) if np.any(~np.isnan(vm)) else 0
    off = X[k] - top
    summary = {
        "surface_centre": top.tolist(),
        "footprint_half_width": half,
        "footprint_atoms": int(foot.sum()),
        "depth": depth,
        "vacancies": [q.tolist() for q in vac],
        "vm_max": float(vm[k]),
        "vm_max_offset": off.tolist(),
        "vm_max_vacancy_distance": float(min(np.linalg.norm(X[k] - q) for q in vac)) if vac else None,
        "vm_max_near_indenter": bool(
            np.all(np.abs(off[:2]) <= half + a) and -off[2] <= 2 * a
        ),
        **_common(fields),
        "relax_steps": run.steps,
    }
    return ScenarioResult("indentation", summary, sys, fields, trace=run.trace)


RUNNERS = {
    "uniform": run_uniform,
    "tensile": run_tensile,
    "crack": run_crack,
    "dislocation": run_dislocation,
    "indentation": run_indentation,
}


def run_scenario(spec: ScenarioSpec, ctx: Experiment = None) -> ScenarioResult:
    return RUNNERS[spec.kind](spec, ctx)
