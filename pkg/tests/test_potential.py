import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsfield import LatticeConfig, PairPotential, build_fcc
from lsfield.potential import DEFAULT_A, DEFAULT_B, assemble_forces, energy_and_forces, total_energy


def test_defaults_and_equilibrium(potential):
    assert (potential.A, potential.B) == (DEFAULT_A, DEFAULT_B)
    assert potential.r_eq == pytest.approx((2 * DEFAULT_B / DEFAULT_A) ** (1 / 6))
    assert abs(potential.dphi(potential.r_eq)) < 1e-9
    assert potential.d2phi(potential.r_eq) > 0
    assert potential.phi(potential.r_eq) < 0


def test_invalid_inputs(potential):
    with pytest.raises(ValueError):
        PairPotential(A=-1.0)
    with pytest.raises(ValueError):
        potential.phi(0.0)
    with pytest.raises(ValueError):
        potential.dphi(np.array([1.0, -2.0]))


@settings(max_examples=50)
@given(st.floats(2.2, 3.5))
def test_derivatives_match_finite_differences(r):
    p = PairPotential()
    h = 1e-6 * r
    fd1 = (p.phi(r + h) - p.phi(r - h)) / (2 * h)
    fd2 = (p.dphi(r + h) - p.dphi(r - h)) / (2 * h)
    scale = abs(p.A / r**7)
    assert abs(fd1 - p.dphi(r)) < 1e-6 * scale
    assert abs(fd2 - p.d2phi(r)) < 1e-5 * scale


def test_pair_force_antisymmetric(potential, rng):
    r = rng.uniform(-2, 2, (20, 3)) + np.array([2.5, 0, 0])
    np.testing.assert_allclose(potential.pair_force(-r), -potential.pair_force(r))
    # attractive beyond r_eq: force on origin atom points along the bond
    v = np.array([3.0, 0, 0])
    assert potential.pair_force(v)[0] > 0


def test_forces_are_negative_energy_gradient(potential, rng):
    sys = build_fcc(LatticeConfig(nx=2, ny=2, nz=2))
    u = 0.05 * rng.standard_normal(sys.X.shape)
    f = assemble_forces(sys, potential, u)
    h = 1e-6
    for atom, k in [(0, 0), (7, 1), (20, 2), (30, 0)]:
        up, dn = u.copy(), u.copy()
        up[atom, k] += h
        dn[atom, k] -= h
        g = (total_energy(sys, potential, up) - total_energy(sys, potential, dn)) / (2 * h)
        assert f[atom, k] == pytest.approx(-g, rel=1e-5, abs=1e-3)
    e, f2 = energy_and_forces(sys, potential, u)
    assert e == pytest.approx(total_energy(sys, potential, u), rel=1e-13)
    np.testing.assert_allclose(f2, f, rtol=1e-12, atol=1e-9)


def test_total_force_and_torque_vanish(potential, rng):
    sys = build_fcc(LatticeConfig(nx=3, ny=3, nz=3))
    for _ in range(5):
        u = 0.1 * rng.standard_normal(sys.X.shape)
        f = assemble_forces(sys, potential, u)
        x = sys.X + u
        scale = np.max(np.abs(f))
        assert np.max(np.abs(f.sum(axis=0))) <= 1e-7 * max(1.0, scale)
        assert np.max(np.abs(np.cross(x, f).sum(axis=0))) <= 1e-7 * max(1.0, scale * np.max(np.abs(x)))
