"""Displacement boundary conditions and static relaxation.

Free atoms are relaxed with Polak-Ribiere (PR+) nonlinear conjugate gradients.
Fixed atoms are removed from the optimization variables, so constraints hold
exactly.

Near convergence the total energy (a sum of ~1e4 bond terms of size ~1e5)
cannot resolve the remaining decrease. The line search therefore brackets the
root of the directional derivative, and the sufficient-decrease test allows
for the summation round-off of the energy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from lsfield.potential import PairPotential, assemble_forces, energy_and_forces

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelaxParams:
    force_tolerance: float = 1e-8
    max_iterations: int = 50000
    restart_interval: int | None = None  # default: 3 * number of free atoms
    max_step: float = 0.2  # largest single-atom move per line-search trial
    armijo: float = 1e-4
    curvature: float = 0.1
    max_line_search: int = 40

    def __post_init__(self):
        if not self.force_tolerance > 0:
            raise ValueError("force_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")


class RelaxationError(RuntimeError):
    """Relaxation stopped before reaching the force tolerance."""

    def __init__(self, message, residual, iterations, system=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.system = system


@dataclass
class RelaxResult:
    system: object
    energy: float
    residual: float
    iterations: int
    force_evaluations: int
    trace: list = field(default_factory=list)  # (iteration, energy, max residual)

    def metadata(self):
        return {
            "energy": self.energy,
            "residual": self.residual,
            "iterations": self.iterations,
            "force_evaluations": self.force_evaluations,
        }


def apply_uniform_bc(sys, F):
    """Move fixed atoms to ``x = F X``; free atoms keep their displacements."""
    F = np.asarray(F, dtype=float)
    if F.shape != (3, 3):
        raise ValueError(f"expected 3x3 deformation gradient, got {F.shape}")
    if not np.linalg.det(F) > 0:
        raise ValueError("deformation gradient must have positive determinant")
    out = sys.copy()
    H = F - np.eye(3)
    out.u[out.fixed] = out.X[out.fixed] @ H.T
    return out


def constraint_forces(sys, p: PairPotential):
    """External force holding each fixed atom, shape ``(N, 3)``; zero rows for
    free atoms."""
    f = -assemble_forces(sys, p)
    f[~sys.fixed] = 0.0
    return f


def max_free_residual(sys, p: PairPotential):
    f = assemble_forces(sys, p)[~sys.fixed]
    return float(np.max(np.abs(f))) if f.size else 0.0


class _Objective:
    def __init__(self, sys, p):
        self.sys = sys
        self.p = p
        self.free = np.flatnonzero(~sys.fixed)
        self.u = sys.u.copy()
        self.nevals = 0
        i, _, dX = sys.unique_bonds()
        # round-off scale of the summed energy
        self.energy_noise = 1e-13 * len(i) * abs(p.phi(np.full(1, p.r_eq))[0])

    def __call__(self, v):
        self.u[self.free] = v.reshape(-1, 3)
        self.nevals += 1
        e, f = energy_and_forces(self.sys, self.p, self.u)
        return e, -f[self.free].ravel()


def relax(sys, p: PairPotential, params: RelaxParams = RelaxParams(), trace=None):
    """Relax free atoms to static equilibrium.

    Parameters
    ----------
    sys : AtomSystem
        System with boundary conditions already applied. Not modified.
    trace : callable, optional
        Called as ``trace(iteration, energy, residual)`` after every
        accepted step, including iteration 0.

    Returns
    -------
    RelaxResult

    Raises
    ------
    RelaxationError
        On exceeding ``max_iterations``, a failed line search, or a
        non-finite energy. The exception carries the final residual.
    """
    obj = _Objective(sys, p)
    v = sys.u[obj.free].ravel().copy()
    records = []

    def record(it, e, res):
        records.append((it, e, res))
        if trace is not None:
            trace(it, e, res)

    if v.size == 0:
        e, _ = energy_and_forces(sys, p)
        record(0, e, 0.0)
        return RelaxResult(sys.copy(), e, 0.0, 0, 1, records)

    e, g = obj(v)
    if not np.isfinite(e):
        raise RelaxationError("non-finite initial energy", np.inf, 0, sys)
    res = float(np.max(np.abs(g)))
    record(0, e, res)
    restart = params.restart_interval or 3 * len(obj.free)
    d = -g
    alpha_prev = None
    gd_prev = None
    it = 0
    since_restart = 0

    def finish(v, e, res, it):
        out = sys.copy()
        out.u[obj.free] = v.reshape(-1, 3)
        return out

    while res > params.force_tolerance:
        if it >= params.max_iterations:
            raise RelaxationError(
                f"no convergence after {it} iterations (residual {res:.3g})",
                res, it, finish(v, e, res, it),
            )
        gd = float(g @ d)
        if gd >= 0:
            d = -g
            gd = float(g @ d)
            since_restart = 0
        dmax = float(np.max(np.abs(d)))
        if alpha_prev is None:
            alpha0 = 0.1 * params.max_step / dmax
        else:
            alpha0 = alpha_prev * min(10.0, gd_prev / gd)
        alpha0 = min(alpha0, params.max_step / dmax)

        step = _line_search(obj, v, d, e, gd, alpha0, params, dmax)
        if step is None and since_restart > 0:
            d = -g
            gd = float(g @ d)
            dmax = float(np.max(np.abs(d)))
            step = _line_search(obj, v, d, e, gd, min(alpha0, params.max_step / dmax), params, dmax)
            since_restart = 0
        if step is None:
            raise RelaxationError(
                f"line search failed at iteration {it} (residual {res:.3g})",
                res, it, finish(v, e, res, it),
            )
        alpha, e_new, g_new = step
        if not np.isfinite(e_new):
            raise RelaxationError("energy blow-up", np.inf, it, finish(v, e, res, it))
        v = v + alpha * d
        it += 1
        since_restart += 1
        if since_restart >= restart:
            beta = 0.0
            since_restart = 0
        else:
            beta = max(0.0, float(g_new @ (g_new - g)) / float(g @ g))
        d = -g_new + beta * d
        g, e = g_new, e_new
        alpha_prev, gd_prev = alpha, gd
        res = float(np.max(np.abs(g)))
        record(it, e, res)

    return RelaxResult(finish(v, e, res, it), e, res, it, obj.nevals, records)


def _line_search(obj, v, d, e0, gd0, alpha, params, dmax):
    """Find a step along ``d`` meeting sufficient decrease and the strong
    curvature condition. Returns ``(alpha, energy, gradient)`` or None."""
    amax = params.max_step / dmax
    lo, gd_lo = 0.0, gd0
    hi, gd_hi = None, None
    best = None
    for _ in range(params.max_line_search):
        e, g = obj(v + alpha * d)
        if not np.isfinite(e):
            hi, gd_hi = alpha, None
            alpha = lo + 0.5 * (alpha - lo)
            continue
        gd = float(g @ d)
        decrease = e <= e0 + params.armijo * alpha * gd0 + obj.energy_noise
        if decrease and (best is None or abs(gd) < abs(best[3])):
            best = (alpha, e, g, gd)
        if decrease and abs(gd) <= params.curvature * abs(gd0):
            return alpha, e, g
        if not decrease or gd > 0:
            hi, gd_hi = alpha, (gd if decrease else None)
        else:
            lo, gd_lo = alpha, gd
        if hi is None:
            # extrapolate with the secant, at most 4x, never past the trust cap
            if gd < gd0:
                guess = lo - gd_lo * lo / (gd_lo - gd0) if lo > 0 else 4 * alpha
            else:
                guess = 4 * alpha
            new = min(max(guess, 1.5 * alpha), 4 * alpha, amax)
            if new <= alpha:
                return best[:3] if best else None
            alpha = new
        else:
            width = hi - lo
            if gd_hi is not None and gd_hi > gd_lo:
                guess = lo - gd_lo * width / (gd_hi - gd_lo)
                alpha = min(max(guess, lo + 0.1 * width), hi - 0.1 * width)
            else:
                alpha = lo + 0.5 * width
            if width <= 1e-16 * max(hi, 1e-300):
                break
    return best[:3] if best else None
