"""Fixed-size tensor helpers.

Tensors are ``(3, 3)`` float arrays. The 9-vector form is the full
row-major flattening ``[11, 12, 13, 21, 22, 23, 31, 32, 33]`` (no
engineering-Voigt folding); symmetry is imposed by penalty where needed.
"""

import numpy as np

# (row, col) pairs of the six independent components of a symmetric tensor,
# in the order used by every table and CSV file: 11, 22, 33, 12, 13, 23.
SYM_INDICES = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
SYM_LABELS = ("11", "22", "33", "12", "13", "23")


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a normal matrix is singular or too ill-conditioned."""

    def __init__(self, message, condition=np.inf):
        super().__init__(message)
        self.condition = condition


def flatten(t):
    """Row-major 9-vector of a 3x3 tensor."""
    t = np.asarray(t, dtype=float)
    if t.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) tensor, got shape {t.shape}")
    return t.reshape(t.shape[:-2] + (9,))


def unflatten(v):
    """Inverse of :func:`flatten`."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 9:
        raise ValueError(f"expected (..., 9) vector, got shape {v.shape}")
    return v.reshape(v.shape[:-1] + (3, 3))


def sym6(t):
    """The six components ``(11, 22, 33, 12, 13, 23)`` of ``t``."""
    t = np.asarray(t, dtype=float)
    return np.stack([t[..., i, j] for i, j in SYM_INDICES], axis=-1)


def green_lagrange(F):
    """Green-Lagrange strain ``E = (F^T F - I) / 2``.

    Accepts a single tensor or a stack of shape ``(..., 3, 3)``.
    """
    F = np.asarray(F, dtype=float)
    C = np.swapaxes(F, -1, -2) @ F
    E = 0.5 * (C - np.eye(3))
    # C is symmetric in exact arithmetic; remove round-off asymmetry
    return 0.5 * (E + np.swapaxes(E, -1, -2))


def stretch_from_strain(E, sym_tol=1e-12):
    """Rotation-free deformation gradient with the given Green-Lagrange strain.

    Returns the symmetric positive-definite root ``F = (I + 2E)^(1/2)``.

    Raises
    ------
    ValueError
        If ``E`` is not symmetric or ``I + 2E`` is not positive definite.
    """
    E = np.asarray(E, dtype=float)
    if E.shape != (3, 3):
        raise ValueError(f"expected 3x3 strain, got shape {E.shape}")
    if not np.all(np.isfinite(E)):
        raise ValueError("strain has non-finite components")
    if np.max(np.abs(E - E.T)) > sym_tol * max(1.0, np.max(np.abs(E))):
        raise ValueError("strain tensor must be symmetric")
    C = np.eye(3) + 2.0 * 0.5 * (E + E.T)
    w, Q = np.linalg.eigh(C)
    if w[0] <= 0.0:
        raise ValueError(f"I + 2E is not positive definite (min eigenvalue {w[0]:.3g})")
    F = (Q * np.sqrt(w)) @ Q.T
    return 0.5 * (F + F.T)


def von_mises(s):
    """Von Mises equivalent of the symmetric part of ``s``.

    Works on a single tensor or a stack; NaN tensors give NaN.
    """
    s = np.asarray(s, dtype=float)
    s = 0.5 * (s + np.swapaxes(s, -1, -2))
    dev = s - np.trace(s, axis1=-2, axis2=-1)[..., None, None] * np.eye(3) / 3.0
    return np.sqrt(1.5 * np.sum(dev * dev, axis=(-2, -1)))


def antisymmetry(s):
    """Relative antisymmetric norm ``|s - s^T| / |s|`` (0 for the zero tensor)."""
    s = np.asarray(s, dtype=float)
    num = np.linalg.norm(s - np.swapaxes(s, -1, -2), axis=(-2, -1))
    den = np.linalg.norm(s, axis=(-2, -1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def condition_number(M):
    """2-norm condition number of a symmetric matrix (or stack)."""
    w = np.abs(np.linalg.eigvalsh(M))
    lo = w.min(axis=-1)
    hi = w.max(axis=-1)
    with np.errstate(divide="ignore"):
        return np.where(lo > 0, hi / np.where(lo > 0, lo, 1.0), np.inf)


def solve_spd(M, b, max_condition=1e12):
    """Solve ``M x = b`` for symmetric positive-definite ``M``.

    Uses a Cholesky factorization followed by one step of iterative
    refinement.

    Raises
    ------
    SingularMatrixError
        If ``M`` is indefinite, singular or its condition number exceeds
        ``max_condition``. The exception carries the condition estimate.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected square matrix, got shape {M.shape}")
    cond = float(condition_number(0.5 * (M + M.T)))
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularMatrixError(
            f"matrix is singular or ill-conditioned (condition {cond:.3g})", cond
        )
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(
            f"matrix is not positive definite (condition {cond:.3g})", cond
        ) from None
    x = _cho_solve(L, b)
    x += _cho_solve(L, b - M @ x)
    return x


def _cho_solve(L, b):
    from scipy.linalg import solve_triangular

    y = solve_triangular(L, b, lower=True)
    return solve_triangular(L.T, y, lower=False)


def rotation_matrix(axis, angle):
    """Rodrigues rotation about ``axis`` by ``angle`` radians."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K
