import numpy as np
import pytest

from lsfield import LatticeConfig, build_fcc, relax
from lsfield.reference import QCReferenceLattice, boundary_stress, qc_cauchy, qc_pk1, qc_stress
from lsfield.statics import apply_uniform_bc
from lsfield.tensor import rotation_matrix


def test_volume_modes():
    assert QCReferenceLattice().volume == pytest.approx(16.0)
    assert QCReferenceLattice(volume_mode="half-cutoff-sphere").volume == pytest.approx(4 / 3 * np.pi * 1.5**3)
    with pytest.raises(ValueError):
        QCReferenceLattice(volume_mode="cube")


def test_pk1_oracle(potential):
    F = np.diag([1.01, 1.0, 0.99])
    ref = QCReferenceLattice()
    P = np.zeros((3, 3))
    for R in ref.vectors:
        r = F @ R
        L = np.linalg.norm(r)
        P += potential.dphi(L) / L * np.outer(r, R)
    np.testing.assert_allclose(qc_pk1(F, potential, ref), P / (2 * ref.volume), rtol=1e-12)


def test_cauchy_symmetric_and_objective(potential):
    F = np.eye(3) + np.array([[0.01, 0.004, 0], [0.0, -0.01, 0.002], [0.003, 0, 0.02]])
    s = qc_stress(F, potential)
    np.testing.assert_allclose(s, s.T, atol=1e-10)
    Q = rotation_matrix([0.2, 1.0, -0.3], 0.4)
    np.testing.assert_allclose(qc_stress(Q @ F, potential), Q @ s @ Q.T, atol=1e-8)
    _, asym = qc_cauchy(qc_pk1(F, potential), F, return_asymmetry=True)
    assert asym >= 0


def test_push_forward_variants_agree_for_symmetric_F(potential):
    F = np.diag([1.01, 1.02, 0.98])
    np.testing.assert_allclose(qc_stress(F, potential, push_forward="PF"), qc_stress(F, potential), atol=1e-9)
    with pytest.raises(ValueError):
        qc_cauchy(np.eye(3), np.eye(3), push_forward="FP")


def test_qc_rejects_bad_F(potential):
    with pytest.raises(ValueError):
        qc_pk1(-np.eye(3), potential)
    with pytest.raises(ValueError):
        qc_pk1(np.eye(2), potential)


def test_boundary_stress_uniaxial(potential):
    sys = build_fcc(LatticeConfig(nx=4, ny=4, nz=4))
    res = relax(apply_uniform_bc(sys, np.diag([1.0, 1.0, 1.01])), potential)
    bs = boundary_stress(res.system, potential)
    s = bs.sigma
    assert s[2, 2] > 0 and s[2, 2] > s[0, 0]
    assert s[0, 0] == pytest.approx(s[1, 1], rel=1e-9)
    assert abs(s[0, 1]) < 1e-6 * s[2, 2]
    assert np.max(np.abs(bs.spread)) < 1e-6 * s[2, 2]


def test_boundary_stress_needs_fixed_faces(potential, small_lattice):
    sys = small_lattice.copy()
    sys.fixed[:] = False
    with pytest.raises(ValueError):
        boundary_stress(sys, potential)
