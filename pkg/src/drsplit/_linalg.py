"""Small dense linear-algebra helpers: subspace projectors and exact
projections onto polyhedra for desk-scale problems."""

import itertools
import warnings

import numpy as np
from scipy.optimize import nnls

from .errors import DimensionError, RankDeficiencyWarning

EPS = np.finfo(float).eps

# Relative cutoff below which singular values of a supplied basis count as zero.
RANK_RTOL = 1e-12
# A projected component whose norm is below SNAP_FACTOR * n * eps * ||w|| is
# within the rounding error of the projector itself and is set to exact zero.
SNAP_FACTOR = 16.0


def as_point(x, n=None, name="x"):
    """Return ``x`` as a 1-d float array, checking its length against ``n``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def as_matrix(a, name="A"):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


class Subspace:
    """A linear subspace of R^n given by spanning columns.

    One full SVD of the basis provides orthonormal bases of both the
    subspace and its orthogonal complement. Dependent columns are dropped
    with a :class:`RankDeficiencyWarning`.

    Parameters
    ----------
    basis : array_like, shape (n, r)
        Columns spanning the subspace. ``r`` may be zero.
    n : int, optional
        Ambient dimension; required only when ``basis`` has no columns and
        cannot carry its own row count.
    """

    def __init__(self, basis, n=None, warn=True):
        basis = np.asarray(basis, dtype=float)
        if basis.ndim == 1:
            basis = basis.reshape(-1, 1)
        if basis.size == 0:
            if n is None:
                n = basis.shape[0] if basis.ndim == 2 else 0
            basis = np.zeros((n, 0))
        if basis.ndim != 2:
            raise DimensionError(f"basis must be a matrix, got shape {basis.shape}")
        if n is not None and basis.shape[0] != n:
            raise DimensionError(f"basis has {basis.shape[0]} rows, expected {n}")
        self.n = basis.shape[0]
        self.basis = basis
        if basis.shape[1] == 0 or not np.any(basis):
            rank = 0
            q = np.eye(self.n)
            s = np.zeros(0)
        else:
            q, s, _ = np.linalg.svd(basis, full_matrices=True)
            rank = int(np.sum(s > RANK_RTOL * s[0]))
        self.singular_values = s
        self.dropped = basis.shape[1] - rank
        if self.dropped and warn:
            warnings.warn(
                f"basis has {basis.shape[1]} columns but rank {rank}; "
                f"{self.dropped} dependent column(s) dropped",
                RankDeficiencyWarning,
                stacklevel=2,
            )
        self.rank = rank
        self.V = np.ascontiguousarray(q[:, :rank])
        self.U = np.ascontiguousarray(q[:, rank:])

    @property
    def dim(self):
        return self.rank

    def orthogonal_complement(self):
        out = Subspace.__new__(Subspace)
        out.n = self.n
        out.basis = self.U
        out.singular_values = np.ones(self.U.shape[1])
        out.dropped = 0
        out.rank = self.U.shape[1]
        out.V, out.U = self.U, self.V
        return out

    def components(self, w):
        """Return ``(x, u)`` with ``x`` in the subspace, ``u`` in its complement.

        The smaller component is computed from its own basis and the larger
        one as the remainder, so ``x + u`` reproduces ``w`` to rounding.
        Components below the projector's rounding floor are set to zero,
        which makes points already in the subspace (or its complement) exact
        fixed points of the projection.
        """
        w = as_point(w, self.n, "w")
        x = self.V @ (self.V.T @ w)
        u = self.U @ (self.U.T @ w)
        nx, nu = np.linalg.norm(x), np.linalg.norm(u)
        floor = SNAP_FACTOR * self.n * EPS * np.linalg.norm(w)
        if nu <= floor:
            return w.copy(), np.zeros(self.n)
        if nx <= floor:
            return np.zeros(self.n), w.copy()
        if nu <= nx:
            return w - u, u
        return x, w - x

    def project(self, w):
        return self.components(w)[0]

    def project_perp(self, w):
        return self.components(w)[1]

    def contains(self, w, tol=1e-9):
        w = as_point(w, self.n, "w")
        return bool(np.linalg.norm(self.U.T @ w) <= tol)

    def projector_matrix(self):
        return self.V @ self.V.T


def project_polyhedral_cone(a, ineq=None, eq=None):
    """Project ``a`` onto the cone ``{z : ineq @ z <= 0, eq @ z = 0}``.

    Uses Moreau's decomposition: the polar cone is generated by the rows of
    ``ineq`` (nonnegative multipliers) and ``eq`` (free multipliers), and the
    projection onto it is a nonnegative least-squares problem solved exactly
    by the Lawson-Hanson active-set method.
    """
    a = as_point(a, name="a")
    n = a.shape[0]
    gens = []
    if ineq is not None and np.size(ineq):
        gens.append(as_matrix(ineq, "ineq").T)
    if eq is not None and np.size(eq):
        e = as_matrix(eq, "eq").T
        gens.extend([e, -e])
    if not gens:
        return a.copy()
    gen = np.hstack(gens)
    if gen.shape[0] != n:
        raise DimensionError("constraint matrices do not match the point")
    lam, _ = nnls(gen, a, maxiter=50 * gen.shape[1] + 100)
    return a - gen @ lam


def project_polyhedron(y, G=None, h=None, E=None, e=None, tol=1e-10):
    """Exact projection of ``y`` onto ``{x : G x <= h, E x = e}`` by enumeration.

    Every candidate active set of inequality rows (up to the ambient
    dimension) defines an affine subspace; the projection of ``y`` onto that
    subspace is computed in least-norm form and kept if feasible. The true
    projection lies in the relative interior of a face, so it is one of the
    candidates, and it is the closest feasible one. Exponential in the number
    of inequalities; meant for n <= 6 or so.

    Returns ``(x, dist)``; ``x`` is None and ``dist`` is ``inf`` when the
    polyhedron is empty.
    """
    y = as_point(y, name="y")
    n = y.shape[0]
    G = np.zeros((0, n)) if G is None else as_matrix(G, "G")
    h = np.zeros(0) if h is None else as_point(h, G.shape[0], "h")
    E = np.zeros((0, n)) if E is None else as_matrix(E, "E")
    e = np.zeros(0) if e is None else as_point(e, E.shape[0], "e")
    m = G.shape[0]
    best, best_d = None, np.inf
    for size in range(min(m, n) + 1):
        for active in itertools.combinations(range(m), size):
            rows = list(active)
            A = np.vstack([E, G[rows]])
            b = np.concatenate([e, h[rows]])
            if A.shape[0]:
                delta, *_ = np.linalg.lstsq(A, b - A @ y, rcond=None)
                x = y + delta
                if np.linalg.norm(A @ x - b) > tol * (1.0 + np.linalg.norm(b)):
                    continue
            else:
                x = y.copy()
            if m and np.any(G @ x - h > tol * (1.0 + np.abs(h))):
                continue
            d = float(np.linalg.norm(x - y))
            if d < best_d:
                best, best_d = x, d
    return best, best_d
