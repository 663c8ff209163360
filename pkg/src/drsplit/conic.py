"""Cone feasibility: find a nonzero point of ``C ∩ K`` or of ``C° ∩ K*``.

With ``f = δ_C`` and ``g = δ_K`` the splitting operator becomes
``F(w) = (w + R_K R_C w) / 2`` with reflections ``R = 2Π - I``. When ``C`` is
a linear subspace ``L`` and ``K`` the nonnegative orthant it collapses to
``F(w) = max(Π_L w, Π_{L⊥} w)``, and the iteration identifies the
Goldman-Tucker partition ``(supp L, supp L⊥)`` after finitely many steps.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ._linalg import Subspace, as_point
from .dr_core import DRState, StopRule, run
from .errors import AmbiguousSupportError, ConstructionError, DimensionError
from .prox_catalog import (
    IndicatorOrthant,
    IndicatorPolar,
    IndicatorShiftedOrthant,
    IndicatorSubspace,
    Reflected,
)

TAU_ID = 1e-8
WINDOW = 50
MEMBERSHIP_TOL = 1e-9


def as_subspace(L, n=None):
    """Accept a :class:`Subspace`, a :class:`ConeSpec` of kind subspace, or a basis matrix."""
    if isinstance(L, Subspace):
        return L
    if isinstance(L, ConeSpec):
        if L.kind != "subspace":
            raise ConstructionError(f"expected a subspace, got cone kind {L.kind!r}")
        return L.subspace
    return Subspace(L, n=n)


class ConeSpec:
    """A closed convex cone (or the shifted orthant ``[1, inf) x R^{n-1}_+``).

    Build with :func:`subspace`, :func:`orthant`, :func:`shifted_orthant`,
    :func:`polar_of` or :func:`dual_of`.
    """

    def __init__(self, kind, n, subspace=None, base=None):
        self.kind = kind
        self.n = int(n)
        self.subspace = subspace
        self.base = base

    @property
    def is_cone(self):
        if self.kind == "shifted_orthant":
            return False
        return self.base is None or self.base.is_cone

    def _check(self, z):
        return as_point(z, self.n, "z")

    def project(self, z):
        z = self._check(z)
        k = self.kind
        if k == "subspace":
            return self.subspace.project(z)
        if k == "orthant":
            return np.maximum(z, 0.0)
        if k == "shifted_orthant":
            e1 = np.zeros(self.n)
            e1[0] = 1.0
            return np.maximum(z, e1)
        if k == "polar_of":
            return self.base.project_polar(z)
        # dual cone C* = -C°
        return -self.base.project_polar(-z)

    def project_polar(self, z):
        z = self._check(z)
        k = self.kind
        if k == "subspace":
            return self.subspace.project_perp(z)
        if k == "orthant":
            return np.minimum(z, 0.0)
        if k == "shifted_orthant":
            raise ConstructionError("the shifted orthant is not a cone and has no polar projector")
        if k == "polar_of":
            return self.base.project(z)
        # (C*)° = -C
        return -self.base.project(-z)

    def reflect(self, z):
        return 2.0 * self.project(z) - self._check(z)

    def decompose(self, z):
        """``(Π_C z, Π_{C°} z)``; the two parts are orthogonal and sum to ``z``."""
        return self.project(z), self.project_polar(z)

    def contains(self, z, tol=MEMBERSHIP_TOL):
        z = self._check(z)
        if self.kind == "subspace":
            return self.subspace.contains(z, tol)
        if self.kind == "orthant":
            return bool(np.all(z >= -tol))
        return bool(np.linalg.norm(z - self.project(z)) <= tol * max(1.0, np.linalg.norm(z)))

    def sample(self, rng, size=1):
        """Random points of the cone (projections of Gaussian draws)."""
        pts = rng.standard_normal((size, self.n))
        return np.array([self.project(p) for p in pts])

    def to_dict(self):
        if self.kind == "subspace":
            return {"kind": "subspace", "basis": self.subspace.basis.tolist(), "n": self.n}
        if self.kind in ("orthant", "shifted_orthant"):
            return {"kind": self.kind, "n": self.n}
        return {"kind": self.kind, "of": self.base.to_dict()}

    def __repr__(self):
        return f"ConeSpec({self.kind!r}, n={self.n})"


def subspace(basis, n=None):
    s = as_subspace(basis, n)
    return ConeSpec("subspace", s.n, subspace=s)


def orthant(n):
    return ConeSpec("orthant", n)


def shifted_orthant(n):
    if n < 1:
        raise ConstructionError("shifted orthant needs n >= 1")
    return ConeSpec("shifted_orthant", n)


def polar_of(cone):
    if not cone.is_cone:
        raise ConstructionError(f"{cone.kind} is not a cone")
    return ConeSpec("polar_of", cone.n, base=cone)


def dual_of(cone):
    if not cone.is_cone:
        raise ConstructionError(f"{cone.kind} is not a cone")
    return ConeSpec("dual_of", cone.n, base=cone)


def cone_from_dict(spec):
    kind = spec.get("kind")
    if kind == "subspace":
        return subspace(spec["basis"], spec.get("n"))
    if kind == "orthant":
        return orthant(int(spec["n"]))
    if kind == "shifted_orthant":
        return shifted_orthant(int(spec["n"]))
    if kind == "polar_of":
        return polar_of(cone_from_dict(spec["of"]))
    if kind == "dual_of":
        return dual_of(cone_from_dict(spec["of"]))
    raise ConstructionError(f"unknown cone kind {kind!r}")


def project(cone, z):
    return cone.project(z)


def indicator(cone):
    """The catalog indicator function of ``cone``."""
    k = cone.kind
    if k == "subspace":
        return IndicatorSubspace(cone.subspace)
    if k == "orthant":
        return IndicatorOrthant(cone.n)
    if k == "shifted_orthant":
        return IndicatorShiftedOrthant(cone.n)
    if k == "polar_of":
        return IndicatorPolar(indicator(cone.base))
    # δ_{C*}(z) = δ_{C°}(-z)
    return Reflected(IndicatorPolar(indicator(cone.base)))


@dataclass(frozen=True)
class ConeStep:
    """Result of one cone operator evaluation with both decompositions of ``w``."""

    state: DRState
    w_C: np.ndarray
    w_Cpolar: np.ndarray


def cone_dr_operator(C, K, w) -> ConeStep:
    """``F(w) = (w + R_K R_C w) / 2`` computed from reflections."""
    if C.n != K.n:
        raise DimensionError(f"cones live in R^{C.n} and R^{K.n}")
    w = as_point(w, C.n, "w")
    x, xc = C.decompose(w)
    r = 2.0 * x - w
    y = K.project(r)
    w_next = 0.5 * (w + (2.0 * y - r))
    state = DRState(0, w_next, x, y, xc, y - 2.0 * x + w, float(np.linalg.norm(w_next - w)))
    return ConeStep(state, x, xc)


def subspace_orthant_step(L, w):
    """``max(Π_L w, Π_{L⊥} w)``."""
    x, u = as_subspace(L).components(w)
    return np.maximum(x, u)


def affine_step(L, w):
    """``max(Π_L w, Π_{L⊥} w + e1)``: the operator for ``L`` against the shifted orthant."""
    L = as_subspace(L)
    x, u = L.components(w)
    u = u.copy()
    u[0] += 1.0
    return np.maximum(x, u)


def homogenize(point, basis=None):
    """Lift the affine set ``point + span(basis)`` to ``span{(1, point), (0, b_j)}``.

    A point ``x`` of the lifted subspace with ``x_1 >= 1`` rescales to a point
    of the affine set. Returns the lifted basis matrix.
    """
    p = as_point(point, name="point")
    n = p.shape[0]
    if basis is None:
        basis = np.zeros((n, 0))
    B = np.asarray(basis, dtype=float).reshape(n, -1)
    top = np.concatenate([[1.0], p])[:, None]
    rest = np.vstack([np.zeros((1, B.shape[1])), B])
    return np.hstack([top, rest])


def _is_subspace_orthant(C, K):
    return C.kind == "subspace" and K.kind == "orthant"


def fixed_point_membership(C, K, w, tol=MEMBERSHIP_TOL):
    """Is ``w`` in ``(C ∩ K) + (C° ∩ K*)``?

    Exact for a subspace against the orthant: the decomposition ``w = x + u``
    along ``L`` and ``L⊥`` is unique, so membership means both parts are
    nonnegative. For every other pair the residual ``||w - F(w)|| <= tol`` is
    used as a surrogate.
    """
    w = as_point(w, C.n, "w")
    if _is_subspace_orthant(C, K):
        x, u = C.subspace.components(w)
        return bool(np.all(x >= -tol) and np.all(u >= -tol))
    return cone_dr_operator(C, K, w).state.residual <= tol


# ---------------------------------------------------------------------------
# Goldman-Tucker support identification


@dataclass
class SupportPartition:
    """Maximum supports of ``L ∩ R^n_+`` and ``L⊥ ∩ R^n_+`` (0-based indices)."""

    n: int
    supp_L: Tuple[int, ...]
    supp_Lperp: Tuple[int, ...]
    identified_at: Optional[int] = None
    certificate: Optional[Tuple[np.ndarray, np.ndarray]] = None
    frozen_at: Optional[int] = None
    iterations: int = 0
    notes: list = field(default_factory=list)

    def same_partition(self, other):
        return set(self.supp_L) == set(other.supp_L) and set(self.supp_Lperp) == set(other.supp_Lperp)

    def to_dict(self, one_based=True):
        off = 1 if one_based else 0
        out = {
            "n": self.n,
            "index_base": off,
            "supp_L": [i + off for i in self.supp_L],
            "supp_Lperp": [i + off for i in self.supp_Lperp],
            "identified_at": self.identified_at,
            "frozen_at": self.frozen_at,
            "iterations": self.iterations,
            "notes": list(self.notes),
        }
        if self.certificate is not None:
            out["certificate"] = {
                "x_bar": self.certificate[0].tolist(),
                "u_bar": self.certificate[1].tolist(),
            }
        return out


def _restricted_projection(L, z, zero_idx):
    """Project ``z`` onto ``L ∩ {x_i = 0 for i in zero_idx}`` and zero those entries exactly."""
    V = L.V
    idx = list(zero_idx)
    if idx and V.shape[1]:
        # columns of V spanning vectors that vanish on idx
        _, s, vt = np.linalg.svd(V[idx], full_matrices=True)
        r = int(np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 0.0)))
        W = V @ vt[r:].T
    else:
        W = V
    out = W @ (W.T @ z)
    out[idx] = 0.0
    return out


def _certificate(L, S, T, x, u):
    x_bar = _restricted_projection(L, x, T)
    u_bar = _restricted_projection(L.orthogonal_complement(), u, S)
    return x_bar, u_bar


def _certificate_ok(L, S, T, cert, rtol=1e-9):
    """Do the certificates prove ``S ⊆ supp L`` and ``T ⊆ supp L⊥``?

    Together with disjointness and ``S ∪ T = {1..n}`` that pins down the
    partition exactly.
    """
    x_bar, u_bar = cert
    for v, idx, basis_perp in ((x_bar, S, L.U), (u_bar, T, L.V)):
        if not idx:
            continue
        top = float(np.max(np.abs(v)))
        if top == 0.0 or np.min(v[list(idx)]) <= rtol * top:
            return False
        if np.any(v < 0):
            return False
        if basis_perp.shape[1] and np.linalg.norm(basis_perp.T @ v) > rtol * np.linalg.norm(v):
            return False
    return True


def identify_supports(
    L,
    w0=None,
    stop: StopRule = StopRule(max_iters=100_000),
    tau: float = TAU_ID,
    window: int = WINDOW,
    until_frozen: bool = False,
) -> SupportPartition:
    """Run ``w <- max(Π_L w, Π_{L⊥} w)`` from a positive start and read off the supports.

    The sign pattern of ``x_k - u_k`` (entries within ``tau`` of zero count
    as unresolved) must stay fixed and fully resolved for ``window``
    consecutive steps, or the iterate must freeze bitwise. The candidate
    partition ``S = {x > u}``, ``T = {x < u}`` is then accepted only if it is
    certified: ``x_k`` projected onto ``L ∩ {x_T = 0}`` must be strictly
    positive on ``S`` and ``u_k`` projected onto ``L⊥ ∩ {u_S = 0}`` strictly
    positive on ``T``. Otherwise iteration continues. Indices follow
    the step numbering of :func:`drsplit.dr_core.run`: step ``k`` reads
    ``x_k = Π_L w_{k-1}``.

    Parameters
    ----------
    until_frozen : bool
        Keep iterating after identification until ``w_k == w_{k-1}``
        bitwise (or the budget runs out) and report ``frozen_at``.

    Raises
    ------
    ValueError
        ``w0`` has a nonpositive entry.
    AmbiguousSupportError
        The pattern never stabilized; carries the unresolved indices.
    """
    L = as_subspace(L)
    n = L.n
    w = np.ones(n) if w0 is None else as_point(w0, n, "w0").copy()
    if not np.all(w > 0):
        raise ValueError("w0 must be strictly positive")
    everything = tuple(range(n))
    if L.rank == 0:
        return SupportPartition(n, (), everything, 0, (np.zeros(n), w.copy()), 0, 0, ["L = {0}"])
    if L.rank == n:
        return SupportPartition(n, everything, (), 0, (w.copy(), np.zeros(n)), 0, 0, ["L = R^n"])

    pattern = np.zeros(n, dtype=int)
    last_change = np.zeros(n, dtype=int)
    frozen_at = None
    found = None
    next_check = 0
    k = 0
    for k in range(1, int(stop.max_iters) + 1):
        x, u = L.components(w)
        diff = x - u
        new = np.where(diff > tau, 1, np.where(diff < -tau, -1, 0))
        last_change[new != pattern] = k
        pattern = new
        w_next = np.maximum(x, u)
        # once w_k == w_{k-1} the map is applied to the same input forever
        if frozen_at is None and np.array_equal(w_next, w):
            frozen_at = k
        w = w_next
        resolved = bool(np.all(pattern != 0))
        streak = k - int(last_change.max()) + 1
        if found is None and resolved and (frozen_at is not None or (streak >= window and k >= next_check)):
            S = tuple(int(i) for i in np.flatnonzero(x > u))
            T = tuple(int(i) for i in np.flatnonzero(x < u))
            cert = _certificate(L, S, T, x, u)
            if _certificate_ok(L, S, T, cert):
                found = (S, T, cert, int(last_change.max()))
            else:
                next_check = k + window
        if found is not None and (not until_frozen or frozen_at is not None):
            break
        if frozen_at is not None and found is None:
            break

    if found is None:
        ambiguous = {i for i in range(n) if pattern[i] == 0 or last_change[i] > k - window}
        if not ambiguous:
            # pattern settled but never certified
            ambiguous = set(range(n))
        S = tuple(int(i) for i in np.flatnonzero(pattern > 0) if i not in ambiguous)
        T = tuple(int(i) for i in np.flatnonzero(pattern < 0) if i not in ambiguous)
        partial = SupportPartition(n, S, T, None, None, frozen_at, k)
        raise AmbiguousSupportError(
            f"support pattern unresolved after {k} iterations at indices {sorted(ambiguous)}",
            ambiguous,
            partial,
        )
    S, T, cert, identified_at = found
    return SupportPartition(n, S, T, identified_at, cert, frozen_at, k)


def nonzero_limit_run(C, K, w0_mode="ones", stop: StopRule = StopRule(tol=1e-12), tol=1e-8):
    """Run from an interior start and report both parts of the limit.

    Only ``K = R^n_+`` is supported, with the all-ones start, which lies in
    ``relint K ∩ relint K*``. Returns ``(trace, info)`` where ``info`` holds
    the limit, its two parts and their norms.
    """
    if K.kind != "orthant":
        raise ConstructionError("interior starts are implemented only for the nonnegative orthant")
    if w0_mode != "ones":
        raise ConstructionError(f"unknown start mode {w0_mode!r}")
    w0 = np.ones(K.n)
    trace = run(indicator(C), indicator(K), w0, stop)
    w_bar = trace.final.w
    w_C, w_polar = C.decompose(w_bar)
    nc, np_ = float(np.linalg.norm(w_C)), float(np.linalg.norm(w_polar))
    info = {
        "limit": w_bar,
        "w_C": w_C,
        "w_Cpolar": w_polar,
        "norm_C": nc,
        "norm_Cpolar": np_,
        "C_part_nonzero": nc > tol,
        "Cpolar_part_nonzero": np_ > tol,
        "stop_reason": trace.stop_reason,
    }
    return trace, info


def random_subspace(n, rng, structured=None):
    """Random basis of a subspace of ``R^n``.

    With ``structured=False`` the basis is Gaussian of random rank, which
    almost surely gives a trivial partition. With ``structured=True`` a
    random partition ``(S, T)`` is drawn first and ``L`` is built to have
    exactly ``supp L = S``: it contains a point positive on ``S`` and is
    orthogonal to a point positive on ``T``. ``None`` picks either at random.
    """
    if structured is None:
        structured = bool(rng.integers(2))
    if not structured:
        r = int(rng.integers(0, n + 1))
        return rng.standard_normal((n, r))
    mask = rng.random(n) < rng.random()
    S, T = np.flatnonzero(mask), np.flatnonzero(~mask)
    x_hat = np.zeros(n)
    x_hat[S] = rng.uniform(0.5, 2.0, S.size)
    u_hat = np.zeros(n)
    u_hat[T] = rng.uniform(0.5, 2.0, T.size)
    cols = [x_hat[:, None]] if S.size else []
    extra = int(rng.integers(0, max(n - 1, 0)))
    if extra:
        Z = rng.standard_normal((n, extra))
        if T.size:
            uh = u_hat / np.linalg.norm(u_hat)
            Z -= np.outer(uh, uh @ Z)
        cols.append(Z)
    if not cols:
        return np.zeros((n, 0))
    return np.hstack(cols)
