"""FCC lattice construction, reference neighbor lists and boundary bookkeeping."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

FULL_COORDINATION = 12
FACE_NAMES = ("-x", "+x", "-y", "+y", "-z", "+z")


@dataclass(frozen=True)
class LatticeConfig:
    """Geometry of a block of conventional FCC cells."""

    a: float = 4.0
    nx: int = 8
    ny: int = 8
    nz: int = 8
    r_cut: float = 3.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"lattice constant must be positive, got {self.a}")
        if not self.r_cut > 0:
            raise ValueError(f"cutoff radius must be positive, got {self.r_cut}")
        if self.r_cut >= self.a:
            raise ValueError(
                f"cutoff {self.r_cut} must be below the lattice constant {self.a} "
                "(nearest-neighbor shell only)"
            )
        for n in (self.nx, self.ny, self.nz):
            if int(n) != n or n < 1:
                raise ValueError(f"cell counts must be positive integers, got {n}")

    @property
    def nn_distance(self):
        return self.a / np.sqrt(2.0)


@dataclass
class AtomSystem:
    """Reference and current configuration of an atomic block.

    Current positions are stored as displacements ``u`` from the reference
    positions ``X``; bond vectors are evaluated as ``dX + (u_j - u_i)`` so that
    their precision does not degrade with distance from the origin.

    Neighbors are kept in compressed-row form: the bonds of atom ``i`` are
    ``nbr_ptr[i]:nbr_ptr[i + 1]``. ``nbr_dX`` is the exact reference difference
    ``X_j - X_i``; ``nbr_R`` is the lattice bond vector used for field
    recovery. The two differ only for bonds reconnected by a slip defect.
    Reference differences are exact multiples of ``a / 2`` for lattice sites.
    """

    X: np.ndarray
    a: float
    r_cut: float
    box_lo: np.ndarray
    box_hi: np.ndarray
    u: np.ndarray = None
    fixed: np.ndarray = None
    site_id: np.ndarray = None
    nbr_ptr: np.ndarray = field(default=None, repr=False)
    nbr_j: np.ndarray = field(default=None, repr=False)
    nbr_dX: np.ndarray = field(default=None, repr=False)
    nbr_R: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        n = len(self.X)
        if self.u is None:
            self.u = np.zeros_like(self.X)
        if self.fixed is None:
            self.fixed = np.zeros(n, dtype=bool)
        if self.site_id is None:
            self.site_id = np.arange(n)

    @property
    def n_atoms(self):
        return len(self.X)

    @property
    def x(self):
        """Current positions."""
        return self.X + self.u

    @x.setter
    def x(self, value):
        self.u = np.asarray(value, dtype=float) - self.X

    @property
    def nbr_i(self):
        return np.repeat(np.arange(self.n_atoms), np.diff(self.nbr_ptr))

    @property
    def coordination(self):
        return np.diff(self.nbr_ptr)

    @property
    def interior(self):
        """Atoms with full nearest-neighbor coordination."""
        return self.coordination == FULL_COORDINATION

    def neighbors(self, i):
        """List of ``(j, R_j, |R_j|)`` for atom ``i``."""
        s = slice(self.nbr_ptr[i], self.nbr_ptr[i + 1])
        R = self.nbr_R[s]
        return [(int(j), Rj.copy(), float(np.linalg.norm(Rj))) for j, Rj in zip(self.nbr_j[s], R)]

    def bond_vectors(self, u=None):
        """Current bond vectors ``r_ij = x_j - x_i`` for every directed bond."""
        u = self.u if u is None else u
        return self.nbr_dX + (u[self.nbr_j] - u[self.nbr_i])

    def unique_bonds(self):
        """``(i, j, dX)`` for each bond listed once with ``i < j``."""
        i = self.nbr_i
        keep = i < self.nbr_j
        return i[keep], self.nbr_j[keep], self.nbr_dX[keep]

    def copy(self):
        return replace(
            self,
            X=self.X.copy(),
            u=self.u.copy(),
            fixed=self.fixed.copy(),
            site_id=self.site_id.copy(),
        )

    def delete_atoms(self, indices):
        """New system without the given atoms; neighbor lists are rebuilt."""
        keep = np.ones(self.n_atoms, dtype=bool)
        keep[np.asarray(indices, dtype=int)] = False
        out = AtomSystem(
            X=self.X[keep],
            a=self.a,
            r_cut=self.r_cut,
            box_lo=self.box_lo,
            box_hi=self.box_hi,
            u=self.u[keep],
            fixed=self.fixed[keep],
            site_id=self.site_id[keep],
        )
        return build_neighbors(out, self.r_cut)

    def find_site(self, position, tol=1e-6):
        """Index of the atom whose reference position is ``position``."""
        d = np.linalg.norm(self.X - np.asarray(position, dtype=float), axis=1)
        k = int(np.argmin(d))
        if d[k] > tol:
            raise KeyError(f"no atom at reference position {position}")
        return k


def fcc_sites(cfg):
    """Corner and face-center sites of an ``nx x ny x nz`` conventional block.

    Sites are the half-lattice grid points with even index sum, so duplicates
    never arise; output is lexicographic in ``(X1, X2, X3)``.
    """
    i, j, k = np.meshgrid(
        np.arange(2 * cfg.nx + 1),
        np.arange(2 * cfg.ny + 1),
        np.arange(2 * cfg.nz + 1),
        indexing="ij",
    )
    grid = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)
    grid = grid[grid.sum(axis=1) % 2 == 0]
    return grid * (cfg.a / 2.0)


def build_fcc(cfg: LatticeConfig) -> AtomSystem:
    """Build the lattice, its reference neighbor lists and boundary mask."""
    X = fcc_sites(cfg)
    lo = np.zeros(3)
    hi = np.array([cfg.nx, cfg.ny, cfg.nz], dtype=float) * cfg.a
    sys = AtomSystem(X=X, a=cfg.a, r_cut=cfg.r_cut, box_lo=lo, box_hi=hi)
    sys = build_neighbors(sys, cfg.r_cut)
    return classify_boundary(sys)


def neighbor_pairs(X, r_cut):
    """Unordered pairs ``(i, j)``, ``i < j``, with ``|X_j - X_i| <= r_cut``,
    sorted lexicographically."""
    X = np.asarray(X, dtype=float)
    if len(X) < 2:
        return np.zeros((0, 2), dtype=int)
    pairs = cKDTree(X).query_pairs(r_cut, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=int)
    pairs = np.sort(pairs, axis=1)
    # the tree search is inclusive up to round-off; enforce the exact rule
    d = np.linalg.norm(X[pairs[:, 1]] - X[pairs[:, 0]], axis=1)
    pairs = pairs[d <= r_cut]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def brute_force_pairs(X, r_cut):
    """All-pairs reference for :func:`neighbor_pairs`."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    out = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if np.linalg.norm(X[j] - X[i]) <= r_cut
    ]
    return np.array(out, dtype=int).reshape(-1, 2)


def _csr_from_pairs(n, pairs):
    i = np.concatenate([pairs[:, 0], pairs[:, 1]])
    j = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((j, i))
    i, j = i[order], j[order]
    ptr = np.zeros(n + 1, dtype=int)
    np.cumsum(np.bincount(i, minlength=n), out=ptr[1:])
    return ptr, j


def reference_differences(sys: AtomSystem, i, j):
    """``X_j - X_i``; sites on the half-lattice grid get exact multiples of
    ``a / 2`` rather than differences of rounded positions."""
    h = sys.a / 2.0
    k = np.rint(sys.X / h)
    if np.all(np.abs(sys.X - k * h) <= 1e-9 * sys.a):
        k = k.astype(np.int64)
        return (k[j] - k[i]) * h
    return sys.X[j] - sys.X[i]


def build_neighbors(sys: AtomSystem, r_cut: float) -> AtomSystem:
    """Attach reference-configuration neighbor lists (both directions)."""
    pairs = neighbor_pairs(sys.X, r_cut)
    ptr, j = _csr_from_pairs(sys.n_atoms, pairs)
    i = np.repeat(np.arange(sys.n_atoms), np.diff(ptr))
    dX = reference_differences(sys, i, j)
    sys.r_cut = r_cut
    sys.nbr_ptr, sys.nbr_j, sys.nbr_dX, sys.nbr_R = ptr, j, dX, dX.copy()
    return sys


def rebuild_neighbors_current(sys: AtomSystem, r_cut: float, lattice_vectors) -> AtomSystem:
    """Rebuild bonds from current positions, e.g. after inserting a slip defect.

    Bonds present in the reference lattice keep ``R = X_j - X_i``; new bonds
    get the ideal lattice vector closest to the current bond.
    """
    pairs = neighbor_pairs(sys.x, r_cut)
    ptr, j = _csr_from_pairs(sys.n_atoms, pairs)
    i = np.repeat(np.arange(sys.n_atoms), np.diff(ptr))
    dX = reference_differences(sys, i, j)
    r = dX + sys.u[j] - sys.u[i]
    V = np.asarray(lattice_vectors, dtype=float)
    nearest = V[np.argmin(np.linalg.norm(r[:, None, :] - V[None, :, :], axis=2), axis=1)]
    is_lattice_bond = np.linalg.norm(dX - nearest, axis=1) < 1e-9 * sys.a
    R = np.where(is_lattice_bond[:, None], dX, nearest)
    sys.nbr_ptr, sys.nbr_j, sys.nbr_dX, sys.nbr_R = ptr, j, dX, R
    return sys


def nn_vectors(a):
    """The 12 nearest-neighbor vectors of an FCC lattice with constant ``a``."""
    h = a / 2.0
    out = []
    for p in (-1, 1):
        for q in (-1, 1):
            out += [(p * h, q * h, 0.0), (p * h, 0.0, q * h), (0.0, p * h, q * h)]
    V = np.array(out)
    return V[np.lexsort((V[:, 2], V[:, 1], V[:, 0]))]


def classify_boundary(sys: AtomSystem) -> AtomSystem:
    """Mark atoms on the six outermost lattice planes as fixed."""
    tol = 1e-9 * sys.a
    on_hull = np.any(
        (np.abs(sys.X - sys.box_lo) < tol) | (np.abs(sys.X - sys.box_hi) < tol), axis=1
    )
    sys.fixed = on_hull
    return sys


@dataclass
class BoundaryFaces:
    """Atoms on the six boundary planes and the reference area of each."""

    members: dict
    areas: dict

    def normal_axis(self, name):
        return "xyz".index(name[1])


def boundary_faces(sys: AtomSystem) -> BoundaryFaces:
    """Face membership from the reference bounding box.

    Edge and corner atoms belong to every face they lie on. Areas are the
    reference box face areas; deformation-induced changes are ignored.
    """
    extent = sys.box_hi - sys.box_lo
    if np.any(extent <= 0):
        raise ValueError(f"degenerate bounding box extent {extent}")
    tol = 1e-9 * sys.a
    members, areas = {}, {}
    for axis in range(3):
        others = [k for k in range(3) if k != axis]
        area = float(extent[others[0]] * extent[others[1]])
        for sign, bound in (("-", sys.box_lo), ("+", sys.box_hi)):
            name = sign + "xyz"[axis]
            members[name] = np.flatnonzero(np.abs(sys.X[:, axis] - bound[axis]) < tol)
            areas[name] = area
    return BoundaryFaces(members=members, areas=areas)


def write_lattice_csv(path, sys: AtomSystem):
    """Dump ``id, X1, X2, X3, fixed, coordination``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "X1", "X2", "X3", "fixed", "coordination"])
        for k in range(sys.n_atoms):
            X = sys.X[k]
            w.writerow(
                [int(sys.site_id[k]), *(f"{v:.9g}" for v in X), int(sys.fixed[k]), int(sys.coordination[k])]
            )
