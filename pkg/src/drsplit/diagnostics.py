"""Quantitative checks of error bounds and rates.

Closed-form constants (strong convexity, diagonal QP Hoffman constants),
rate fitting on traces, sampled lower bounds for Hoffman and
subtransversality constants, and exact small-scale oracles (distance to the
fixed-point set, Goldman-Tucker partition) used to validate the solvers.
Every sampled supremum is a lower bound and is reported as one.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

from ._linalg import as_point, project_polyhedral_cone, project_polyhedron
from .conic import SupportPartition, as_subspace
from .dr_core import EXACT_FIXED_POINT
from .errors import OracleError
from .prox_catalog import Quadratic

DEFAULT_WINDOW = 50
DEFAULT_R = 1.0
ORACLE_MAX_N = 12
DIST_FLOOR = 1e-10  # distances below this are rounding noise


# ---------------------------------------------------------------------------
# strong convexity


def strong_convexity_H(mu: float, mu_star: float) -> float:
    """``4 (1 + max(1/mu, 1/mu_star))``.

    ``mu`` is a strong convexity modulus of ``f`` or ``g`` and ``mu_star``
    one of ``f*`` or ``g_*`` (relative to the primal and dual solution sets).
    """
    if not (mu > 0 and mu_star > 0):
        raise ValueError("mu and mu_star must be positive")
    return 4.0 * (1.0 + max(1.0 / mu, 1.0 / mu_star))


def quadratic_pair_H(f: Quadratic, g: Quadratic) -> float:
    """Best constant the strong-convexity bound gives for a quadratic pair.

    A quadratic with Hessian ``Q`` is ``lambda_min(Q)``-strongly convex and its
    conjugate is ``1/lambda_max(Q)``-strongly convex, so the primal modulus is
    the larger ``lambda_min`` and the dual modulus the larger ``1/lambda_max``.
    """
    primal = max(f.strong_convexity, g.strong_convexity)
    dual = max(1.0 / f.smoothness if f.smoothness > 0 else 0.0, 1.0 / g.smoothness if g.smoothness > 0 else 0.0)
    return strong_convexity_H(primal, dual)


def rate_bound(H: float) -> float:
    """``sqrt(1 - 1/H^2)``, the per-step contraction of ``dist(w, W)``."""
    if H <= 0:
        return 0.0
    return math.sqrt(max(0.0, 1.0 - 1.0 / (H * H)))


# ---------------------------------------------------------------------------
# the a, b, c inequality


def _mu_of(mus):
    m1, m2, m3, m4 = (float(m) for m in mus)
    return min(m1 + m2, m3 + m4)


def lemma_abc_hypothesis_slack(a, b, c, mus) -> float:
    """``<a,b> - (mu1|c|^2 + mu2|c-b|^2 + mu3|a-c|^2 + mu4|a+b-c|^2)/2``."""
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    m1, m2, m3, m4 = (float(m) for m in mus)
    rhs = m1 * (c @ c) + m2 * ((c - b) @ (c - b)) + m3 * ((a - c) @ (a - c)) + m4 * ((a + b - c) @ (a + b - c))
    return float(a @ b - 0.5 * rhs)


def lemma_abc_check(a, b, c, mus) -> Optional[bool]:
    """Check ``|a + b| <= 4 (1 + 1/mu) |b|`` with ``mu = min(mu1+mu2, mu3+mu4)``.

    Returns ``None`` when the hypothesis fails (the triple is not admissible).
    """
    if any(m < 0 for m in mus):
        raise ValueError("the four moduli must be nonnegative")
    if lemma_abc_hypothesis_slack(a, b, c, mus) < 0:
        return None
    mu = _mu_of(mus)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    lhs = np.linalg.norm(a + b)
    if mu == 0:
        # the bound is infinite
        return True
    return bool(lhs <= 4.0 * (1.0 + 1.0 / mu) * np.linalg.norm(b) * (1 + 1e-12))


def sample_lemma_abc(rng, count, max_dim=5, batch=20_000, mu_range=(1e-2, 10.0)):
    """Rejection-sample ``count`` admissible ``(a, b, c, mus)`` tuples.

    Candidates are correlated Gaussian triples (``a`` and ``c`` are noisy
    multiples of ``b``) with log-uniform moduli; only those satisfying the
    hypothesis are kept. Returns a list and the number of candidates drawn.
    """
    out, drawn = [], 0
    lo, hi = np.log(mu_range[0]), np.log(mu_range[1])
    while len(out) < count:
        n = int(rng.integers(1, max_dim + 1))
        b = rng.standard_normal((batch, n))
        s = rng.uniform(-0.5, 3.0, (batch, 1))
        t = rng.uniform(-0.5, 1.5, (batch, 1))
        a = s * b + rng.uniform(0, 1, (batch, 1)) * rng.standard_normal((batch, n))
        c = t * b + rng.uniform(0, 1, (batch, 1)) * rng.standard_normal((batch, n))
        mus = np.exp(rng.uniform(lo, hi, (batch, 4)))
        dot = np.einsum("ij,ij->i", a, b)
        sq = lambda v: np.einsum("ij,ij->i", v, v)
        rhs = mus[:, 0] * sq(c) + mus[:, 1] * sq(c - b) + mus[:, 2] * sq(a - c) + mus[:, 3] * sq(a + b - c)
        ok = np.flatnonzero(dot - 0.5 * rhs >= 0)
        drawn += batch
        for i in ok[: count - len(out)]:
            out.append((a[i], b[i], c[i], mus[i]))
    return out, drawn


# ---------------------------------------------------------------------------
# diagonal QP Hoffman constants


@dataclass
class DiagQPInstance:
    """``min 1/2 x'diag(d)x + c'x  s.t.  x >= 0`` and one piece ``J`` (0-based)."""

    d: np.ndarray
    c: np.ndarray
    J: frozenset
    R: float = DEFAULT_R

    def __post_init__(self):
        self.d = as_point(self.d, name="d")
        self.c = as_point(self.c, self.d.shape[0], "c")
        self.J = frozenset(int(j) for j in self.J)
        if not np.all(self.d > 0):
            raise ValueError("d must be strictly positive")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if any(j < 0 or j >= self.n for j in self.J):
            raise ValueError("J has indices out of range")

    @property
    def n(self):
        return self.d.shape[0]

    @property
    def in_J(self):
        m = np.zeros(self.n, dtype=bool)
        m[list(self.J)] = True
        return m

    @property
    def feasible_piece(self):
        """``{c < 0} ⊆ J ⊆ {c <= 0}``: the piece meets the fixed-point set."""
        inJ = self.in_J
        return bool(np.all(inJ[self.c < 0]) and np.all(self.c[inJ] <= 0))

    @property
    def offending(self):
        """Coordinates that keep the piece away from the fixed-point set."""
        inJ = self.in_J
        return np.flatnonzero((inJ & (self.c > 0)) | (~inJ & (self.c < 0)))

    def slopes(self):
        """Diagonal of ``M_J``: ``d_j`` on ``J`` and 1 elsewhere."""
        return np.where(self.in_J, self.d, 1.0)

    def G(self, w):
        """``G_J(w) = (I + Q)^{-1}(M_J w + c)``; accepts a batch of rows."""
        return (self.slopes() * np.asarray(w, dtype=float) + self.c) / (1.0 + self.d)

    def piece_constraints(self):
        """``P_J`` as ``{w : S w <= 0}``."""
        sign = np.where(self.in_J, -1.0, 1.0)
        return np.diag(sign)

    def fixed_point(self):
        """The unique ``w`` with ``w^- + Q w^+ + c = 0``."""
        return np.where(self.c < 0, -self.c / self.d, -self.c)

    def to_dict(self, one_based=True):
        off = 1 if one_based else 0
        return {"d": self.d.tolist(), "c": self.c.tolist(), "J": sorted(j + off for j in self.J), "R": self.R}


def diag_qp_hoffman(inst: DiagQPInstance):
    """Closed-form constant of one piece and whether the piece is feasible.

    Feasible piece: ``1 + max(max_{j in J} 1/d_j, max_{j not in J} d_j)``.
    Infeasible piece: ``max R (1 + d_j) / |c_j|`` over offending coordinates.
    The infeasible value is exact with a single offending coordinate; with
    several it overstates the constant (see :func:`diag_qp_hoffman_tight`).
    """
    if inst.feasible_piece:
        inJ = inst.in_J
        terms = list(1.0 / inst.d[inJ]) + list(inst.d[~inJ])
        return float(1.0 + max(terms)), True
    j = inst.offending
    return float(np.max(inst.R * (1.0 + inst.d[j]) / np.abs(inst.c[j]))), False


def diag_qp_hoffman_tight(inst: DiagQPInstance):
    """Exact ``H^R`` of one piece.

    For an infeasible piece ``H^R = R / min_{P_J} ||G_J||``; the minimization
    separates and leaves only the offending coordinates, giving
    ``R / ||(c_j / (1 + d_j))_j||``.
    """
    if inst.feasible_piece:
        return diag_qp_hoffman(inst)
    j = inst.offending
    return float(inst.R / np.linalg.norm(inst.c[j] / (1.0 + inst.d[j]))), False


def diag_qp_gap(inst: DiagQPInstance) -> float:
    """``min_{w in P_J} 1/2 ||Q^{-1/2}(M_J w + c)||^2``, separable for diagonal ``Q``."""
    j = inst.offending
    return float(0.5 * np.sum(inst.c[j] ** 2 / inst.d[j]))


def diag_qp_gap_bound(inst: DiagQPInstance) -> float:
    """``||Q^{-1/2}(I + Q)|| R / sqrt(2 gap)``; infinite on feasible pieces."""
    gap = diag_qp_gap(inst)
    if gap == 0:
        return math.inf
    return float(np.max((1.0 + inst.d) / np.sqrt(inst.d)) * inst.R / math.sqrt(2.0 * gap))


def relative_hoffman_bruteforce(M, c, S, R, points):
    """Sampled ``H^R(G|P)`` for ``G(x) = M x + c`` on ``P = {x : S x <= 0}``.

    ``points`` must lie in ``P``. The distance to ``G^{-1}(0) ∩ P`` is exact:
    a single point when ``M`` is injective, otherwise an active-set
    projection per sample. Returns 0 when ``G`` vanishes on every sample
    (the convention for ``P ⊆ G^{-1}(0)``).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    c = as_point(c, M.shape[0], "c")
    S = np.atleast_2d(np.asarray(S, dtype=float))
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = M.shape[1]
    Gx = X @ M.T + c
    gnorm = np.linalg.norm(Gx, axis=1)
    scale = max(1.0, float(np.abs(c).max(initial=0.0)), float(np.abs(M).max(initial=0.0)))
    live = gnorm > 1e-14 * scale
    if not np.any(live):
        return 0.0
    X, gnorm = X[live], gnorm[live]
    if np.linalg.matrix_rank(M) == n:
        z, *_ = np.linalg.lstsq(M, -c, rcond=None)
        feasible = np.linalg.norm(M @ z + c) <= 1e-10 * scale and np.all(S @ z <= 1e-10 * scale)
        if feasible:
            dist = np.linalg.norm(X - z, axis=1)
        else:
            dist = np.full(X.shape[0], np.inf)
    else:
        dist = np.array([project_polyhedron(x, S, np.zeros(S.shape[0]), M, -c)[1] for x in X])
    return float(np.max(np.minimum(dist, R) / gnorm))


def sample_piece(inst: DiagQPInstance, rng, samples: int):
    """Random points of ``P_J``: clouds around the fixed point and the origin
    at log-uniform scales, with coordinates snapped to the boundary at random."""
    n = inst.n
    sign = np.where(inst.in_J, 1.0, -1.0)
    mag = np.exp(rng.uniform(np.log(1e-4), np.log(1e1), (samples, n)))
    X = rng.standard_normal((samples, n)) * mag
    anchor = inst.fixed_point() if inst.feasible_piece else np.zeros(n)
    use_anchor = rng.random(samples) < 0.5
    X[use_anchor] += anchor
    X = sign * np.abs(X)
    snap = rng.random((samples, n)) < 0.25
    X[snap] = 0.0
    return X


def diag_qp_hoffman_bruteforce(inst: DiagQPInstance, samples: int = 100_000, rng=None, seed: int = 0):
    """Sampled lower bound on ``H^R(G_J|P_J)`` (``n <= 4``)."""
    if inst.n > 4:
        raise OracleError("brute force is limited to n <= 4")
    if samples > 10_000_000:
        raise OracleError("sampling budget exceeded")
    rng = np.random.default_rng(seed) if rng is None else rng
    X = sample_piece(inst, rng, samples)
    M = np.diag(inst.slopes() / (1.0 + inst.d))
    c = inst.c / (1.0 + inst.d)
    return relative_hoffman_bruteforce(M, c, inst.piece_constraints(), inst.R, X)


# ---------------------------------------------------------------------------
# fixed-point set oracles


def quadratic_pair_fixed_point(f: Quadratic, g: Quadratic):
    """The unique fixed point ``x + u`` for quadratics with ``Q_f + Q_g`` positive definite."""
    x = np.linalg.solve(f.Q + g.Q, -(f.c + g.c))
    u = f.Q @ x + f.c
    return x + u


def singleton_dist(w_bar):
    w_bar = as_point(w_bar, name="w_bar")
    return lambda w: float(np.linalg.norm(np.asarray(w, dtype=float) - w_bar))


def subspace_orthant_projection(L, w):
    """Projection onto ``(L ∩ R^n_+) + (L⊥ ∩ R^n_+)``.

    The two cones sit in orthogonal subspaces, so the projection splits into
    projecting ``Π_L w`` onto ``L ∩ R^n_+`` and ``Π_{L⊥} w`` onto
    ``L⊥ ∩ R^n_+``; each is a nonnegative least-squares problem.
    """
    L = as_subspace(L)
    w = as_point(w, L.n, "w")
    x, u = L.components(w)
    eye = np.eye(L.n)
    px = project_polyhedral_cone(x, ineq=-eye, eq=L.U.T if L.U.shape[1] else None)
    pu = project_polyhedral_cone(u, ineq=-eye, eq=L.V.T if L.V.shape[1] else None)
    return px + pu


def subspace_orthant_dist(L):
    L = as_subspace(L)
    if L.n > ORACLE_MAX_N:
        raise OracleError(f"distance oracle limited to n <= {ORACLE_MAX_N}")

    def dist(w):
        w = as_point(w, L.n, "w")
        return float(np.linalg.norm(w - subspace_orthant_projection(L, w)))

    return dist


# ---------------------------------------------------------------------------
# rate fitting


@dataclass
class DiagnosticsReport:
    fitted_rate: Optional[float]
    empirical_H: Optional[float] = None
    predicted_H: Optional[float] = None
    rate_bound: Optional[float] = None
    finite_termination: bool = False
    window: int = 0
    iterations: int = 0
    dist_fitted_rate: Optional[float] = None
    max_contraction: Optional[float] = None
    r_linear_constant: Optional[float] = None
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def _slope(y):
    k = np.arange(len(y), dtype=float)
    return float(np.polyfit(k, y, 1)[0])


def fit_rate(trace, window: int = DEFAULT_WINDOW, dist: Optional[Callable] = None, predicted_H=None):
    """Fit the geometric decay of the residuals over the trailing window.

    ``trace`` is a :class:`~drsplit.dr_core.DRTrace` or a plain residual
    sequence. With a distance oracle ``dist`` (and a trace) the report also
    carries ``empirical_H = max_k dist(w_{k-1}) / ||w_k - w_{k-1}||``, the
    worst squared contraction ``dist(w_k)^2 / dist(w_{k-1})^2`` and the fitted
    decay of the distances. The R-linear constant ``2r/(1-r)`` is reported
    only when both ``dist`` and ``predicted_H`` are known.
    """
    states = getattr(trace, "states", None)
    res = np.asarray(trace.residuals if states is not None else trace, dtype=float)
    exact = np.any(res == 0.0) or getattr(trace, "stop_reason", None) == EXACT_FIXED_POINT
    if len(res) < window + 2 and not exact:
        raise ValueError(f"need at least window + 2 = {window + 2} residuals, got {len(res)}")
    rep = DiagnosticsReport(None, window=window, iterations=len(res))
    if predicted_H is not None:
        rep.predicted_H = float(predicted_H)
        rep.rate_bound = rate_bound(predicted_H)
    if exact:
        rep.finite_termination = True
        k = int(np.argmax(res == 0.0)) + 1 if np.any(res == 0.0) else len(res)
        rep.notes.append(f"exact fixed point reached at k={k}")
    else:
        tail = res[-window:]
        rep.fitted_rate = float(np.exp(_slope(np.log(tail))))
    if dist is not None and states is not None:
        ws = trace.iterates
        d = np.array([dist(w) for w in ws])
        live = d[:-1] > DIST_FLOOR
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(live, np.where(res > 0, d[:-1] / res, np.inf), 0.0)
            contr = np.where(live, (d[1:] / d[:-1]) ** 2, 0.0)
        rep.empirical_H = float(np.max(ratios))
        rep.max_contraction = float(np.max(contr))
        pos = d[-window:]
        if np.all(pos > 0):
            rep.dist_fitted_rate = float(np.exp(_slope(np.log(pos))))
        if rep.rate_bound is not None and rep.rate_bound < 1:
            r = rep.rate_bound
            rep.r_linear_constant = 2.0 * r / (1.0 - r)
        if 0.0 < rep.empirical_H < 1.0:
            rep.notes.append("empirical_H below 1")
    return rep


def contraction_ratios(dists, floor=DIST_FLOOR):
    """``dist_k^2 / dist_{k-1}^2`` wherever ``dist_{k-1}`` exceeds ``floor``."""
    d = np.asarray(dists, dtype=float)
    keep = d[:-1] > floor
    return (d[1:][keep] / d[:-1][keep]) ** 2


# ---------------------------------------------------------------------------
# subtransversality


def _polyhedral_rep(cone):
    """``(ineq, eq)`` with the cone equal to ``{z : ineq z <= 0, eq z = 0}``."""
    n = cone.n
    k = cone.kind
    if k == "subspace":
        return np.zeros((0, n)), cone.subspace.U.T
    if k == "orthant":
        return -np.eye(n), np.zeros((0, n))
    if k in ("polar_of", "dual_of") and cone.base.kind in ("subspace", "orthant"):
        base = cone.base
        if base.kind == "subspace":
            return np.zeros((0, n)), base.subspace.V.T
        # polar of R^n_+ is R^n_-; its dual is R^n_+ itself
        return (np.eye(n) if k == "polar_of" else -np.eye(n)), np.zeros((0, n))
    raise OracleError(f"no polyhedral description for cone kind {k!r}")


def intersection_projection(A, B, z):
    """Projection onto ``A ∩ B`` for subspace/orthant-type cones."""
    Ia, Ea = _polyhedral_rep(A)
    Ib, Eb = _polyhedral_rep(B)
    ineq = np.vstack([Ia, Ib])
    eq = np.vstack([Ea, Eb])
    return project_polyhedral_cone(z, ineq=ineq if ineq.size else None, eq=eq if eq.size else None)


def subtransversality_estimate(A, B, samples: int = 100_000, rng=None, seed: int = 0):
    """Sampled lower bound on ``sup_{x in A \\ B} dist(x, A∩B) / dist(x, B)``.

    Points are projections of Gaussian draws onto ``A``, normalized to the
    unit sphere. Returns 0 when every sample already lies in ``B`` (taken as
    ``A ⊆ B``).
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    best = 0.0
    seen = 0
    Z = rng.standard_normal((samples, A.n))
    for z in Z:
        x = A.project(z)
        nx = np.linalg.norm(x)
        if nx == 0:
            continue
        x = x / nx
        db = np.linalg.norm(x - B.project(x))
        if db <= 1e-12:
            continue
        seen += 1
        dab = np.linalg.norm(x - intersection_projection(A, B, x))
        best = max(best, float(dab / db))
    return best if seen else 0.0


# ---------------------------------------------------------------------------
# Goldman-Tucker partition oracle


def _max_support(basis_cols, n):
    """Largest support of a nonnegative vector in ``span(basis_cols)`` by one LP.

    Variables ``(z, t)``; maximize ``sum t`` subject to ``x = V z >= t``,
    ``0 <= t <= 1``. Any optimum has ``t_i = 1`` exactly on the maximum support.
    """
    r = basis_cols.shape[1]
    if r == 0:
        return np.zeros(n, dtype=bool), np.zeros(n)
    cost = np.concatenate([np.zeros(r), -np.ones(n)])
    A_ub = np.block([[-basis_cols, np.eye(n)], [-basis_cols, np.zeros((n, n))]])
    b_ub = np.zeros(2 * n)
    bounds = [(None, None)] * r + [(0.0, 1.0)] * n
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise OracleError(f"support LP failed: {res.message}")
    t = res.x[r:]
    if np.any((t > 1e-6) & (t < 1 - 1e-6)):
        raise OracleError("support LP returned a fractional indicator")
    x = basis_cols @ res.x[:r]
    return t > 0.5, x


def support_partition_oracle(L, n=None) -> SupportPartition:
    """Exact ``(supp L, supp L⊥)`` from two linear programs (``n <= 12``)."""
    L = as_subspace(L, n)
    n = L.n
    if n > ORACLE_MAX_N:
        raise OracleError(f"oracle limited to n <= {ORACLE_MAX_N}, got {n}")
    s = L.singular_values
    if s.size and s[0] > 0:
        grey = (s > 1e-12 * s[0]) & (s < 1e-8 * s[0])
        if np.any(grey):
            raise OracleError("numerical rank of the basis is ambiguous")
    in_L, x = _max_support(L.V, n)
    in_P, u = _max_support(L.U, n)
    if np.any(in_L & in_P) or not np.all(in_L | in_P):
        raise OracleError("computed supports do not partition the index set")
    x = np.where(in_L, np.maximum(x, 0.0), 0.0)
    u = np.where(in_P, np.maximum(u, 0.0), 0.0)
    S = tuple(int(i) for i in np.flatnonzero(in_L))
    T = tuple(int(i) for i in np.flatnonzero(in_P))
    return SupportPartition(n, S, T, None, (x, u), None, 0, ["oracle"])
