"""Per-atom least-squares recovery of deformation gradient, strain and stress.

For atom ``i`` with bonds ``R_j`` (reference) and ``r_j`` (current):

* deformation gradient: minimize ``sum_j |F R_j - r_j|^2`` over the nine
  components of ``F``;
* stress: minimize ``sum_j |sigma r_j - phi'_j r_j / A_j|^2 + lam |A sigma|^2``,
  where the second term penalizes the antisymmetric part and
  ``A_j = pi |R_j|^2 / N_p`` is the characteristic area of bond ``j``.

Both problems are solved through their 9x9 normal equations. The stress
system is split into symmetric and antisymmetric parts so that a large
penalty does not degrade the accuracy of the symmetric solution. Atoms are
processed in batches of equal coordination.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from lsfield import tensor
from lsfield.potential import PairPotential
from lsfield.tensor import SingularMatrixError

MAX_CONDITION = 1e8

# bit flags in FieldSnapshot.status
STRAIN_UNDEFINED = 1
STRESS_UNDEFINED = 2

# Rows pick sigma_12 - sigma_21, sigma_13 - sigma_31, sigma_23 - sigma_32.
SYMMETRY_CONSTRAINT = np.zeros((3, 9))
SYMMETRY_CONSTRAINT[0, [1, 3]] = (1, -1)
SYMMETRY_CONSTRAINT[1, [2, 6]] = (1, -1)
SYMMETRY_CONSTRAINT[2, [5, 7]] = (1, -1)
_ATA = SYMMETRY_CONSTRAINT.T @ SYMMETRY_CONSTRAINT

# Orthonormal bases of symmetric (6) and antisymmetric (3) 3x3 tensors in the
# 9-vector layout; SYMMETRY_CONSTRAINT @ _W = sqrt(2) I and SYMMETRY_CONSTRAINT @ _S = 0.
_S = np.zeros((9, 6))
_W = np.zeros((9, 3))
for _k, (_i, _j) in enumerate(tensor.SYM_INDICES):
    if _i == _j:
        _S[3 * _i + _i, _k] = 1.0
    else:
        _S[[3 * _i + _j, 3 * _j + _i], _k] = np.sqrt(0.5)
        _W[[3 * _i + _j, 3 * _j + _i], _k - 3] = (np.sqrt(0.5), -np.sqrt(0.5))


@dataclass(frozen=True)
class StressLSConfig:
    """Settings of the stress fit.

    ``penalty`` is the absolute penalty factor; when None it is
    ``penalty_scale * trace(d^T d)`` for each atom.
    """

    penalty_scale: float = 1e5
    penalty: float | None = None
    area_mode: str = "sphere-fraction"

    def __post_init__(self):
        if self.penalty is not None and self.penalty < 0:
            raise ValueError(f"penalty factor must be non-negative, got {self.penalty}")
        if self.penalty_scale < 0:
            raise ValueError(f"penalty scale must be non-negative, got {self.penalty_scale}")
        if self.area_mode != "sphere-fraction":
            raise ValueError(f"unknown characteristic-area mode {self.area_mode!r}")

    def penalty_for(self, trace_dtd):
        if self.penalty is not None:
            return np.full_like(np.asarray(trace_dtd, dtype=float), self.penalty)
        return self.penalty_scale * np.asarray(trace_dtd, dtype=float)


class RecoveryError(SingularMatrixError):
    """Raised by the single-atom routines when an atom has fewer than three
    linearly independent bonds or an ill-conditioned normal matrix."""


# ----------------------------------------------------------------- single atom


def assemble_D(R, r):
    """Block matrix ``D`` (``3N x 9``) and stacked target ``b_F`` (``3N``).

    Block row ``j`` is ``diag(R_j^T, R_j^T, R_j^T)`` so that
    ``D @ flatten(F)`` stacks ``F @ R_j``.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    return _block_rows(R), r.reshape(-1)


def _block_rows(V):
    """``(..., N, 3)`` bond vectors -> ``(..., 3N, 9)`` block rows."""
    shape = V.shape[:-2]
    n = V.shape[-2]
    out = np.zeros(shape + (n, 3, 9))
    for k in range(3):
        out[..., :, k, 3 * k : 3 * k + 3] = V
    return out.reshape(shape + (3 * n, 9))


def characteristic_area(R_length, n_p):
    """Fraction ``1/N_p`` of the sphere through the bond midpoint."""
    R_length = np.asarray(R_length, dtype=float)
    return 4.0 * np.pi * (0.5 * R_length) ** 2 / n_p


def _check_rank(V):
    S = V.T @ V
    cond = float(tensor.condition_number(S))
    if not cond <= MAX_CONDITION:
        raise RecoveryError(
            f"fewer than three linearly independent bonds (condition {cond:.3g})", cond
        )


def recover_F(R, r):
    """Least-squares deformation gradient from reference and current bonds."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    _check_rank(R)
    D, b = assemble_D(R, r)
    return tensor.unflatten(tensor.solve_spd(D.T @ D, D.T @ b))


def recover_strain(R, r):
    return tensor.green_lagrange(recover_F(R, r))


def stress_system(R, r, p: PairPotential, cfg: StressLSConfig = StressLSConfig()):
    """Stacked stress system ``(d, b_sigma, lam)`` of a single atom."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    n_p = len(r)
    d = _block_rows(r)
    L = np.linalg.norm(r, axis=1)
    area = characteristic_area(np.linalg.norm(R, axis=1), n_p)
    b = ((p.dphi(L) / area)[:, None] * r).reshape(-1)
    lam = float(cfg.penalty_for(np.trace(d.T @ d)))
    return d, b, lam


def recover_sigma(R, r, p: PairPotential, cfg: StressLSConfig = StressLSConfig()):
    """Penalized least-squares Cauchy stress of a single atom (not symmetrized)."""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    _check_rank(r)
    d, b, lam = stress_system(R, r, p, cfg)
    x = penalized_solve((d.T @ d)[None], (d.T @ b)[None], np.array([lam]))
    return tensor.unflatten(x[0])


def penalized_solve(G, rhs, lam):
    """Solve ``(G + lam A^T A) x = rhs`` for stacks ``G (m, 9, 9)``, ``rhs (m, 9)``.

    Uses the block form in the symmetric/antisymmetric basis where the
    penalty is ``2 lam`` on the antisymmetric block, then a Schur complement
    onto the symmetric block.
    """
    Gss = _S.T @ G @ _S
    Gsw = _S.T @ G @ _W
    Gww = _W.T @ G @ _W + 2.0 * np.asarray(lam)[:, None, None] * np.eye(3)
    bs = rhs @ _S
    bw = rhs @ _W
    Y = np.linalg.solve(Gww, np.concatenate([np.swapaxes(Gsw, 1, 2), bw[..., None]], axis=2))
    K = Gss - Gsw @ Y[..., :6]
    xs = _solve_batch(K, bs - np.einsum("nij,nj->ni", Gsw, Y[..., 6]))
    xw = Y[..., 6] - np.einsum("nij,nj->ni", Y[..., :6], xs)
    return xs @ _S.T + xw @ _W.T


def atom_bonds(sys, i):
    """``(R, r)`` bond arrays of atom ``i``."""
    s = slice(sys.nbr_ptr[i], sys.nbr_ptr[i + 1])
    R = sys.nbr_R[s]
    r = sys.nbr_dX[s] + sys.u[sys.nbr_j[s]] - sys.u[i]
    return R, r


# --------------------------------------------------------------------- fields


@dataclass
class FieldSnapshot:
    """Recovered per-atom fields; undefined entries are NaN."""

    F: np.ndarray
    E: np.ndarray
    sigma_raw: np.ndarray
    sigma_avg: np.ndarray
    n_p: np.ndarray
    interior: np.ndarray
    status: np.ndarray
    condition_F: np.ndarray
    condition_sigma: np.ndarray
    penalty: np.ndarray
    slip_bonds: np.ndarray

    @property
    def valid(self):
        """Interior atoms with both strain and stress defined."""
        return self.interior & (self.status == 0)

    @property
    def vm_raw(self):
        return tensor.von_mises(self.sigma_raw)

    @property
    def vm_avg(self):
        return tensor.von_mises(self.sigma_avg)

    def antisymmetry(self, which="raw"):
        s = self.sigma_raw if which == "raw" else self.sigma_avg
        ok = ~np.isnan(s[:, 0, 0])
        out = np.full(len(s), np.nan)
        out[ok] = tensor.antisymmetry(s[ok])
        return out


def _solve_batch(M, b):
    x = np.linalg.solve(M, b[..., None])[..., 0]
    x += np.linalg.solve(M, (b - np.einsum("nij,nj->ni", M, x))[..., None])[..., 0]
    return x


def _recover_group(R, r, n_p, p, cfg):
    """Recovery for ``m`` atoms of coordination ``n_p``: arrays ``(m, n_p, 3)``."""
    m = len(R)
    D = _block_rows(R)
    MF = np.einsum("nki,nkj->nij", D, D)
    bF = np.einsum("nki,nk->ni", D, r.reshape(m, -1))
    condF = tensor.condition_number(np.einsum("nki,nkj->nij", R, R))
    okF = condF <= MAX_CONDITION

    d = _block_rows(r)
    dtd = np.einsum("nki,nkj->nij", d, d)
    L = np.linalg.norm(r, axis=2)
    area = characteristic_area(np.linalg.norm(R, axis=2), n_p)
    b_sig = ((p.dphi(L) / area)[..., None] * r).reshape(m, -1)
    rhs = np.einsum("nki,nk->ni", d, b_sig)
    lam = cfg.penalty_for(np.trace(dtd, axis1=1, axis2=2))
    condS = tensor.condition_number(np.einsum("nki,nkj->nij", r, r))
    okS = condS <= MAX_CONDITION

    F = np.full((m, 9), np.nan)
    sig = np.full((m, 9), np.nan)
    if okF.any():
        F[okF] = _solve_batch(MF[okF], bF[okF])
    if okS.any():
        sig[okS] = penalized_solve(dtd[okS], rhs[okS], lam[okS])
    return F, sig, condF, condS, lam


class FieldRecovery:
    """Reusable recovery operator for one system topology.

    Reference-side quantities (bond grouping, ``R`` vectors, conditioning of
    the strain normal matrix) are computed once; :meth:`__call__` evaluates
    the fields for the current displacements.
    """

    def __init__(self, sys, p: PairPotential, cfg: StressLSConfig = StressLSConfig(), threads=1):
        self.sys = sys
        self.p = p
        self.cfg = cfg
        self.threads = max(1, int(threads))
        n_p = sys.coordination
        self.groups = []
        for k in np.unique(n_p):
            atoms = np.flatnonzero(n_p == k)
            if k == 0:
                self.groups.append((0, atoms, None))
                continue
            bonds = sys.nbr_ptr[atoms][:, None] + np.arange(k)[None, :]
            self.groups.append((int(k), atoms, bonds))

    def _chunks(self, atoms):
        size = max(1, -(-len(atoms) // self.threads))
        return [slice(s, s + size) for s in range(0, len(atoms), size)]

    def __call__(self, sys=None):
        sys = self.sys if sys is None else sys
        n = sys.n_atoms
        F = np.full((n, 9), np.nan)
        sig = np.full((n, 9), np.nan)
        condF = np.full(n, np.inf)
        condS = np.full(n, np.inf)
        lam = np.full(n, np.nan)
        i_all = sys.nbr_i
        tasks = []
        for k, atoms, bonds in self.groups:
            if k == 0:
                continue
            for sl in self._chunks(atoms):
                tasks.append((k, atoms[sl], bonds[sl]))

        def work(task):
            k, atoms, bonds = task
            R = sys.nbr_R[bonds]
            r = sys.nbr_dX[bonds] + sys.u[sys.nbr_j[bonds]] - sys.u[i_all[bonds]]
            return atoms, _recover_group(R, r, k, self.p, self.cfg)

        if self.threads > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                results = list(pool.map(work, tasks))
        else:
            results = [work(t) for t in tasks]
        for atoms, (f, s, cf, cs, lm) in results:
            F[atoms], sig[atoms], condF[atoms], condS[atoms], lam[atoms] = f, s, cf, cs, lm

        F = F.reshape(n, 3, 3)
        sig = sig.reshape(n, 3, 3)
        E = np.full_like(F, np.nan)
        okF = ~np.isnan(F[:, 0, 0])
        E[okF] = tensor.green_lagrange(F[okF])
        status = np.where(okF, 0, STRAIN_UNDEFINED) | np.where(
            np.isnan(sig[:, 0, 0]), STRESS_UNDEFINED, 0
        )
        slip = np.bincount(
            i_all,
            weights=np.any(sys.nbr_R != sys.nbr_dX, axis=1).astype(float),
            minlength=n,
        ).astype(int)
        snap = FieldSnapshot(
            F=F,
            E=E,
            sigma_raw=sig,
            sigma_avg=np.full_like(sig, np.nan),
            n_p=sys.coordination.copy(),
            interior=sys.interior.copy(),
            status=status,
            condition_F=condF,
            condition_sigma=condS,
            penalty=lam,
            slip_bonds=slip,
        )
        return average_sigma(snap, sys)


def recover_fields(sys, p: PairPotential, cfg: StressLSConfig = StressLSConfig(), threads=1):
    """Recover ``F``, ``E``, raw and neighbor-averaged stress for every atom."""
    return FieldRecovery(sys, p, cfg, threads)(sys)


def average_sigma(field: FieldSnapshot, sys) -> FieldSnapshot:
    """Blend each atom's stress with its neighbors' (half self, half neighbors).

    Neighbors without a defined stress are skipped and the neighbor half is
    shared among the remaining ones; with no such neighbor the raw value is
    kept. Atoms without raw stress stay undefined.
    """
    s = field.sigma_raw.reshape(-1, 9)
    n = len(s)
    i, j = sys.nbr_i, sys.nbr_j
    has = ~np.isnan(s[:, 0])
    use = has[j]
    count = np.bincount(i[use], minlength=n).astype(float)
    total = np.zeros((n, 9))
    for c in range(9):
        total[:, c] = np.bincount(i[use], weights=s[j[use], c], minlength=n)
    avg = s.copy()
    blend = has & (count > 0)
    avg[blend] = 0.5 * s[blend] + 0.5 * total[blend] / count[blend, None]
    field.sigma_avg = avg.reshape(n, 3, 3)
    return field


def interior_stats(values, mask):
    """Mean and population std of the six symmetric components over ``mask``."""
    v = tensor.sym6(values[mask])
    if len(v) == 0:
        return np.full(6, np.nan), np.full(6, np.nan)
    return v.mean(axis=0), v.std(axis=0)
