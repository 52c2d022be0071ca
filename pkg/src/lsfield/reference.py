"""Reference stresses: boundary constraint forces and the Cauchy-Born (QC)
stress of an infinite lattice under uniform deformation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lsfield.lattice import boundary_faces, nn_vectors
from lsfield.potential import PairPotential
from lsfield.statics import constraint_forces

VOLUME_MODES = ("atomic", "half-cutoff-sphere")
PUSH_FORWARD = ("PFt", "PF")


@dataclass(frozen=True)
class QCReferenceLattice:
    """Nearest-neighbor shell of the representative atom.

    ``volume_mode`` selects the normalization volume ``V`` of the Piola
    stress: ``"atomic"`` is the Wigner-Seitz volume ``a^3 / 4`` of FCC;
    ``"half-cutoff-sphere"`` is ``(4/3) pi (r_cut / 2)^3``.
    """

    a: float = 4.0
    r_cut: float = 3.0
    volume_mode: str = "atomic"

    def __post_init__(self):
        if self.volume_mode not in VOLUME_MODES:
            raise ValueError(f"volume_mode must be one of {VOLUME_MODES}")

    @property
    def vectors(self):
        return nn_vectors(self.a)

    @property
    def volume(self):
        if self.volume_mode == "atomic":
            return self.a**3 / 4.0
        return 4.0 / 3.0 * np.pi * (0.5 * self.r_cut) ** 3


def _check_F(F):
    F = np.asarray(F, dtype=float)
    if F.shape != (3, 3):
        raise ValueError(f"expected 3x3 deformation gradient, got {F.shape}")
    J = np.linalg.det(F)
    if not J > 0:
        raise ValueError(f"deformation gradient must have det > 0 (got {J:.3g})")
    return F, J


def qc_pk1(F, p: PairPotential, ref: QCReferenceLattice = QCReferenceLattice()):
    """First Piola-Kirchhoff stress ``(1/2V) sum phi'(|r|)/|r| r (x) R`` with
    ``r = F R`` over the reference shell."""
    F, _ = _check_F(F)
    R = ref.vectors
    r = R @ F.T
    L = np.linalg.norm(r, axis=1)
    w = p.dphi(L) / L
    return np.einsum("k,ki,kj->ij", w, r, R) / (2.0 * ref.volume)


def qc_cauchy(P, F, push_forward="PFt", return_asymmetry=False):
    """Cauchy stress from the Piola stress, symmetrized.

    ``push_forward="PFt"`` is ``J^-1 P F^T``; ``"PF"`` is ``J^-1 P F``.
    With ``return_asymmetry`` the relative antisymmetric norm of the
    unsymmetrized tensor is returned as well.
    """
    F, J = _check_F(F)
    P = np.asarray(P, dtype=float)
    if push_forward == "PFt":
        s = P @ F.T / J
    elif push_forward == "PF":
        s = P @ F / J
    else:
        raise ValueError(f"push_forward must be one of {PUSH_FORWARD}")
    norm = np.linalg.norm(s)
    asym = float(np.linalg.norm(s - s.T) / norm) if norm > 0 else 0.0
    s = 0.5 * (s + s.T)
    return (s, asym) if return_asymmetry else s


def qc_stress(F, p: PairPotential, ref: QCReferenceLattice = QCReferenceLattice(), push_forward="PFt"):
    return qc_cauchy(qc_pk1(F, p, ref), F, push_forward)


@dataclass
class BoundaryStress:
    sigma: np.ndarray  # average of the two opposite-face estimates
    spread: np.ndarray  # half the difference between them

    @property
    def asymmetry(self):
        n = np.linalg.norm(self.sigma)
        return float(np.linalg.norm(self.sigma - self.sigma.T) / n) if n > 0 else 0.0


def boundary_stress(sys, p: PairPotential) -> BoundaryStress:
    """Stress from constraint forces on the boundary faces.

    Row ``i`` is the force per reference area transmitted through the faces
    normal to axis ``i``: the ``+`` face sum and the negated ``-`` face sum
    are averaged.
    """
    faces = boundary_faces(sys)
    f = constraint_forces(sys, p)
    for name, idx in faces.members.items():
        if not np.all(sys.fixed[idx]):
            raise ValueError(f"face {name} has free atoms; constraint forces undefined")
    plus = np.zeros((3, 3))
    minus = np.zeros((3, 3))
    for axis, c in enumerate("xyz"):
        plus[axis] = f[faces.members["+" + c]].sum(axis=0) / faces.areas["+" + c]
        minus[axis] = -f[faces.members["-" + c]].sum(axis=0) / faces.areas["-" + c]
    return BoundaryStress(sigma=0.5 * (plus + minus), spread=0.5 * np.abs(plus - minus))
