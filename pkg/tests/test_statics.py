import numpy as np
import pytest

from lsfield import LatticeConfig, RelaxParams, build_fcc, relax
from lsfield.potential import assemble_forces
from lsfield.statics import (
    RelaxationError,
    apply_uniform_bc,
    constraint_forces,
    max_free_residual,
)
from lsfield.tensor import stretch_from_strain


def test_affine_state_is_fixed_point(potential):
    sys = build_fcc(LatticeConfig(nx=3, ny=3, nz=3))
    F = stretch_from_strain(np.diag([0.01, -0.005, 0.02]))
    sys.u = sys.X @ (F - np.eye(3)).T
    assert max_free_residual(sys, potential) < 1e-8
    res = relax(sys, potential)
    assert res.iterations == 0


def test_relax_recovers_affine_interior(potential, rng):
    sys = build_fcc(LatticeConfig(nx=3, ny=3, nz=3))
    F = np.eye(3) + 0.01 * rng.uniform(-1, 1, (3, 3))
    loaded = apply_uniform_bc(sys, F)
    res = relax(loaded, potential)
    assert res.residual <= 1e-8
    np.testing.assert_allclose(res.system.x, sys.X @ F.T, atol=1e-10)
    # energy decreases along the trace
    energies = [e for _, e, _ in res.trace]
    assert all(b <= a + 1e-6 for a, b in zip(energies, energies[1:]))


def test_fixed_atoms_do_not_move(potential, rng):
    sys = build_fcc(LatticeConfig(nx=2, ny=2, nz=3))
    sys = apply_uniform_bc(sys, np.diag([1.0, 1.0, 1.01]))
    before = sys.u[sys.fixed].copy()
    sys.u[~sys.fixed] += 0.05 * rng.standard_normal(((~sys.fixed).sum(), 3))
    res = relax(sys, potential)
    np.testing.assert_array_equal(res.system.u[res.system.fixed], before)


def test_constraint_forces_balance(potential):
    sys = apply_uniform_bc(build_fcc(LatticeConfig(nx=3, ny=3, nz=3)), np.diag([1.0, 1.0, 1.02]))
    res = relax(sys, potential)
    f = constraint_forces(res.system, potential)
    assert np.all(f[~res.system.fixed] == 0)
    assert np.max(np.abs(f.sum(axis=0))) < 1e-6
    total = assemble_forces(res.system, potential) + f
    assert np.max(np.abs(total)) < 1e-8


def test_iteration_limit_raises(potential, rng):
    sys = build_fcc(LatticeConfig(nx=3, ny=3, nz=3))
    sys.u[~sys.fixed] = 0.1 * rng.standard_normal(((~sys.fixed).sum(), 3))
    with pytest.raises(RelaxationError) as info:
        relax(sys, potential, RelaxParams(max_iterations=3))
    assert info.value.iterations == 3
    assert info.value.system is not None


def test_bc_rejects_inverted_F(small_lattice):
    with pytest.raises(ValueError):
        apply_uniform_bc(small_lattice, -np.eye(3))


def test_params_validation():
    with pytest.raises(ValueError):
        RelaxParams(force_tolerance=0)
    with pytest.raises(ValueError):
        RelaxParams(max_iterations=0)


def test_relax_deterministic(potential):
    sys = apply_uniform_bc(build_fcc(LatticeConfig(nx=3, ny=3, nz=3)), np.diag([1.0, 1.01, 1.0]))
    a, b = relax(sys, potential), relax(sys, potential)
    np.testing.assert_array_equal(a.system.u, b.system.u)
    assert a.iterations == b.iterations
