"""Lennard-Jones pair potential and force/energy assembly.

Sign convention: for a bond ``r = x_j - x_i`` the force on atom ``i`` is
``phi'(|r|) / |r| * r``, so a positive derivative (stretched bond) pulls
``i`` towards ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_A = 1.0239e8
DEFAULT_B = 2.6211e10


@dataclass(frozen=True)
class PairPotential:
    """``phi(r) = B / r**12 - A / r**6``."""

    A: float = DEFAULT_A
    B: float = DEFAULT_B

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0):
            raise ValueError(f"LJ coefficients must be positive, got A={self.A}, B={self.B}")

    @property
    def r_eq(self):
        """Equilibrium distance ``(2B/A)^(1/6)``."""
        return (2.0 * self.B / self.A) ** (1.0 / 6.0)

    def phi(self, r):
        r = _positive(r)
        r6 = r**-6
        return self.B * r6 * r6 - self.A * r6

    def dphi(self, r):
        r = _positive(r)
        r6 = r**-6
        return (-12.0 * self.B * r6 * r6 + 6.0 * self.A * r6) / r

    def d2phi(self, r):
        r = _positive(r)
        r6 = r**-6
        return (156.0 * self.B * r6 * r6 - 42.0 * self.A * r6) / (r * r)

    def pair_force(self, r_vec):
        """Force on the bond origin atom exerted through ``r_vec`` (shape ``(..., 3)``)."""
        r_vec = np.asarray(r_vec, dtype=float)
        r = np.linalg.norm(r_vec, axis=-1)
        return (self.dphi(r) / r)[..., None] * r_vec


def _positive(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("pair distance must be positive")
    return r


def _bond_data(sys, u):
    i, j, dX = sys.unique_bonds()
    u = sys.u if u is None else u
    r = dX + (u[j] - u[i])
    L = np.linalg.norm(r, axis=1)
    if np.any(L == 0):
        raise ValueError("zero-length bond")
    return i, j, r, L


def assemble_forces(sys, p: PairPotential, u=None):
    """Net interatomic force on every atom, shape ``(N, 3)``."""
    i, j, r, L = _bond_data(sys, u)
    f = (p.dphi(L) / L)[:, None] * r
    n = sys.n_atoms
    out = np.empty((n, 3))
    for k in range(3):
        out[:, k] = np.bincount(i, weights=f[:, k], minlength=n) - np.bincount(
            j, weights=f[:, k], minlength=n
        )
    return out


def total_energy(sys, p: PairPotential, u=None):
    """Potential energy with each bond counted once."""
    _, _, _, L = _bond_data(sys, u)
    return float(np.sum(p.phi(L)))


def energy_and_forces(sys, p: PairPotential, u=None):
    i, j, r, L = _bond_data(sys, u)
    inv6 = L**-6
    energy = float(np.sum(p.B * inv6 * inv6 - p.A * inv6))
    f = ((-12.0 * p.B * inv6 * inv6 + 6.0 * p.A * inv6) / (L * L))[:, None] * r
    n = sys.n_atoms
    out = np.empty((n, 3))
    for k in range(3):
        out[:, k] = np.bincount(i, weights=f[:, k], minlength=n) - np.bincount(
            j, weights=f[:, k], minlength=n
        )
    return energy, out
