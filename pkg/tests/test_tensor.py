import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lsfield import tensor

finite = st.floats(-1e3, 1e3, allow_nan=False)
mat3 = arrays(np.float64, (3, 3), elements=finite)


@given(mat3)
def test_flatten_roundtrip(t):
    v = tensor.flatten(t)
    assert v.shape == (9,)
    np.testing.assert_array_equal(tensor.unflatten(v), t)
    assert v[1] == t[0, 1]  # row-major


def test_sym6_order():
    t = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(tensor.sym6(t), [0, 4, 8, 1, 2, 5])


def test_green_lagrange_identity_and_rotation():
    np.testing.assert_array_equal(tensor.green_lagrange(np.eye(3)), np.zeros((3, 3)))
    Q = tensor.rotation_matrix([1, 2, 3], 0.7)
    assert np.max(np.abs(tensor.green_lagrange(Q))) < 1e-15


@given(arrays(np.float64, (6,), elements=st.floats(-0.1, 0.1)))
def test_stretch_inverts_green_lagrange(e):
    E = np.zeros((3, 3))
    for k, (i, j) in enumerate(tensor.SYM_INDICES):
        E[i, j] = E[j, i] = e[k]
    if np.min(np.linalg.eigvalsh(np.eye(3) + 2 * E)) <= 0.05:
        return
    U = tensor.stretch_from_strain(E)
    np.testing.assert_allclose(U, U.T, atol=1e-15)
    np.testing.assert_allclose(tensor.green_lagrange(U), E, atol=1e-14)


def test_stretch_rejects_bad_strain():
    with pytest.raises(ValueError):
        tensor.stretch_from_strain(np.array([[0, 0.1, 0], [0, 0, 0], [0, 0, 0]]))
    with pytest.raises(ValueError):
        tensor.stretch_from_strain(-np.eye(3))


def test_von_mises_examples():
    assert tensor.von_mises(np.diag([1.0, 0, 0])) == pytest.approx(1.0)
    assert tensor.von_mises(5.0 * np.eye(3)) == pytest.approx(0.0, abs=1e-12)
    s = np.zeros((3, 3))
    s[0, 1] = s[1, 0] = 1.0
    assert tensor.von_mises(s) == pytest.approx(np.sqrt(3))


@settings(max_examples=50)
@given(mat3, st.floats(0, 2 * np.pi), arrays(np.float64, (3,), elements=st.floats(-1, 1)))
def test_von_mises_rotation_invariant(s, angle, axis):
    if np.linalg.norm(axis) < 1e-3:
        return
    s = 0.5 * (s + s.T)
    Q = tensor.rotation_matrix(axis, angle)
    assert tensor.von_mises(Q @ s @ Q.T) == pytest.approx(tensor.von_mises(s), rel=1e-9, abs=1e-9)


def test_antisymmetry_measure():
    assert tensor.antisymmetry(np.eye(3)) == 0.0
    s = np.array([[0, 1.0, 0], [-1.0, 0, 0], [0, 0, 0]])
    assert tensor.antisymmetry(s) == pytest.approx(2.0)


@settings(max_examples=50)
@given(arrays(np.float64, (5, 4), elements=st.floats(-10, 10)), arrays(np.float64, (4,), elements=st.floats(-10, 10)))
def test_solve_spd_matches_pinv(A, b):
    M = A.T @ A + np.eye(4)
    x = tensor.solve_spd(M, b)
    np.testing.assert_allclose(x, np.linalg.pinv(M) @ b, rtol=1e-9, atol=1e-9)


def test_solve_spd_singular_reports_condition():
    M = np.diag([1.0, 1.0, 0.0])
    with pytest.raises(tensor.SingularMatrixError) as info:
        tensor.solve_spd(M, np.ones(3))
    assert info.value.condition > 1e12
    with pytest.raises(np.linalg.LinAlgError):
        tensor.solve_spd(-np.eye(3), np.ones(3))
