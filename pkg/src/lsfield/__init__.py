"""Least-squares recovery of per-atom stress and strain fields in relaxed
pair-potential FCC lattices."""

from lsfield.lattice import AtomSystem, LatticeConfig, build_fcc
from lsfield.potential import PairPotential
from lsfield.recovery import FieldSnapshot, StressLSConfig, recover_fields
from lsfield.statics import RelaxParams, relax

__version__ = "0.1.0"

__all__ = [
    "AtomSystem",
    "FieldSnapshot",
    "LatticeConfig",
    "PairPotential",
    "RelaxParams",
    "StressLSConfig",
    "build_fcc",
    "recover_fields",
    "relax",
]
