"""Linearly constrained problems ``min f(x) + g(y)  s.t.  Ax + By = b``.

Splitting is applied to ``min f~(z) + g~(z)`` with ``f~(z) = min{f(x): Ax = z}``
and ``g~(z) = min{g(y): b - By = z}``, but never forms the tilde functions:
one step solves

    x+ in argmin f(x) + 1/2 ||Ax - w||^2
    y+ in argmin g(y) + 1/2 ||b - By - 2Ax+ + w||^2
    w' = w - Ax+ - By+ + b

and coincides step by step with ADMM (penalty 1) started from the matching
point. The explicit tilde functions are built only for quadratic ``f, g`` as
an independent cross-check.
"""

from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._linalg import as_matrix, as_point, project_polyhedron
from .dr_core import EXACT_FIXED_POINT, MAX_ITERS, RESIDUAL_BELOW_TOL, DRState, DRTrace, StopRule
from .errors import ConstructionError, DimensionError, InnerSolverError
from .prox_catalog import IndicatorAffine, IndicatorSubspace, ProxFunction, Quadratic, from_dict

TAU_INNER = 1e-12
INNER_BUDGET = 10_000
SIGMA_RTOL = 1e-12


class _InnerSolver:
    """Least-norm minimizer of ``h(x) + 1/2 ||Mx - t||^2`` for fixed ``h, M``.

    Closed forms cover the identity map, quadratics and affine/subspace
    indicators; anything else falls back to proximal gradient.
    """

    def __init__(self, h: ProxFunction, M):
        self.h = h
        self.M = M
        k, n = M.shape
        self.identity = k == n and np.array_equal(M, np.eye(n))
        self.mode = "iterative"
        if self.identity:
            self.mode = "prox"
        elif isinstance(h, Quadratic):
            self.mode = "quadratic"
            H = h.Q + M.T @ M
            self._H = H
            self._Hpinv = np.linalg.pinv(H, rcond=1e-12, hermitian=True)
        elif isinstance(h, (IndicatorAffine, IndicatorSubspace)):
            self.mode = "affine"
            p = h.point if isinstance(h, IndicatorAffine) else np.zeros(n)
            V = h.subspace.V
            MV = M @ V
            self._p, self._V = p, V
            self._MVpinv = np.linalg.pinv(MV, rcond=1e-12)
            # directions of V that M annihilates; used for the least-norm tie-break
            if V.shape[1]:
                _, s, vt = np.linalg.svd(MV, full_matrices=True)
                r = int(np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 0.0)))
                VN = V @ vt[r:].T
            else:
                VN = np.zeros((n, 0))
            self._VNpinv = np.linalg.pinv(VN, rcond=1e-12) if VN.shape[1] else None
            self._VN = VN
        else:
            self._step = 1.0 / max(float(np.linalg.norm(M, 2)) ** 2, 1e-300)

    def solve(self, t):
        if self.mode == "prox":
            return self.h.prox(t)
        if self.mode == "quadratic":
            rhs = self.M.T @ t - self.h.c
            x = self._Hpinv @ rhs
            res = np.linalg.norm(self._H @ x - rhs)
            if res > 1e-8 * (1.0 + np.linalg.norm(rhs)):
                raise InnerSolverError("inner quadratic problem is unbounded below", res)
            return x
        if self.mode == "affine":
            z0 = self._MVpinv @ (t - self.M @ self._p)
            x = self._p + self._V @ z0
            if self._VNpinv is not None:
                x = x - self._VN @ (self._VNpinv @ x)
            return x
        return self._prox_gradient(t)

    def _prox_gradient(self, t):
        M, h, s = self.M, self.h, self._step
        x = np.zeros(M.shape[1])
        res = np.inf
        for _ in range(INNER_BUDGET):
            x_new = h.scaled_prox(x - s * (M.T @ (M @ x - t)), s)
            res = float(np.linalg.norm(x_new - x))
            if res <= TAU_INNER * (1.0 + np.linalg.norm(x_new)):
                return x_new
            x = x_new
        raise InnerSolverError(f"inner proximal gradient did not converge in {INNER_BUDGET} steps", res)


class ConstrainedProblem:
    """``min f(x) + g(y)  s.t.  Ax + By = b`` with factorizations computed once."""

    def __init__(self, f: ProxFunction, g: ProxFunction, A, B, b):
        self.f, self.g = f, g
        self.A = as_matrix(A, "A")
        self.B = as_matrix(B, "B")
        self.b = as_point(b, name="b")
        k = self.b.shape[0]
        if self.A.shape != (k, f.dim):
            raise DimensionError(f"A must be {k}x{f.dim}, got {self.A.shape}")
        if self.B.shape != (k, g.dim):
            raise DimensionError(f"B must be {k}x{g.dim}, got {self.B.shape}")
        self.k = k
        self._fs = _InnerSolver(f, self.A)
        self._gs = _InnerSolver(g, self.B)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(from_dict(d["f"]), from_dict(d["g"]), d["A"], d["B"], d["b"])
        except KeyError as exc:
            raise ConstructionError(f"constrained problem: missing field {exc.args[0]!r}") from exc

    def to_dict(self):
        return {
            "f": self.f.to_dict(),
            "g": self.g.to_dict(),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "b": self.b.tolist(),
        }

    def argmin_f(self, t):
        """Least-norm ``argmin f(x) + 1/2 ||Ax - t||^2``."""
        return self._fs.solve(as_point(t, self.k, "t"))

    def argmin_g(self, t):
        """Least-norm ``argmin g(y) + 1/2 ||By - t||^2``."""
        return self._gs.solve(as_point(t, self.k, "t"))


def inner_prox_f(prob: ConstrainedProblem, w):
    """``(x+, A x+)`` for ``x+ = argmin f(x) + 1/2 ||Ax - w||^2``."""
    x = prob.argmin_f(w)
    return x, prob.A @ x


class DRStep(NamedTuple):
    w_next: np.ndarray
    x_plus: np.ndarray
    y_plus: np.ndarray


def general_dr_step(prob: ConstrainedProblem, w) -> DRStep:
    w = as_point(w, prob.k, "w")
    x, Ax = inner_prox_f(prob, w)
    y = prob.argmin_g(prob.b - 2.0 * Ax + w)
    w_next = w - Ax - prob.B @ y + prob.b
    return DRStep(w_next, x, y)


def dr_run(prob: ConstrainedProblem, w0, stop: StopRule = StopRule()) -> DRTrace:
    """Iterate :func:`general_dr_step`.

    States carry ``x = x_k``, ``y = y_k``, ``u = w_{k-1} - A x_k`` and
    ``v = b - B y_k - 2 A x_k + w_{k-1}``, the dual iterates of the tilde
    formulation.
    """
    w = as_point(w0, prob.k, "w0").copy()
    w0 = w.copy()
    states = []
    reason = MAX_ITERS
    for k in range(1, int(stop.max_iters) + 1):
        w_next, x, y = general_dr_step(prob, w)
        Ax, By = prob.A @ x, prob.B @ y
        res = float(np.linalg.norm(w_next - w))
        states.append(DRState(k, w_next, x, y, w - Ax, prob.b - By - 2.0 * Ax + w, res))
        w = w_next
        if stop.exact_zero and res == 0.0:
            reason = EXACT_FIXED_POINT
            break
        if res <= stop.tol:
            reason = RESIDUAL_BELOW_TOL
            break
    config = {"stop": asdict(stop), "mode": "constrained"}
    return DRTrace(w0, states, reason, config, [])


@dataclass(frozen=True)
class ADMMState:
    """ADMM iterate ``(x~_k, u~_k)`` with the lagged ``y~_{k-1}``.

    ``residual`` is the constraint violation ``||A x~_k + B y~_{k-1} - b||``.
    """

    k: int
    x: np.ndarray
    u: np.ndarray
    y: Optional[np.ndarray] = None
    residual: float = float("nan")


def admm_y_update(prob: ConstrainedProblem, x, u):
    """``argmin g(y) - <u, Ax + By - b> + 1/2 ||Ax + By - b||^2``."""
    return prob.argmin_g(prob.b - prob.A @ x + u)


def admm_step(prob: ConstrainedProblem, state: ADMMState) -> ADMMState:
    y = admm_y_update(prob, state.x, state.u)
    By = prob.B @ y
    x_next = prob.argmin_f(prob.b - By + state.u)
    Ax = prob.A @ x_next
    u_next = state.u - Ax - By + prob.b
    return ADMMState(state.k + 1, x_next, u_next, y, float(np.linalg.norm(Ax + By - prob.b)))


def admm_run(prob, x0, u0, iters):
    state = ADMMState(0, as_point(x0, prob.f.dim, "x0"), as_point(u0, prob.k, "u0"))
    states = [state]
    for _ in range(int(iters)):
        state = admm_step(prob, state)
        states.append(state)
    return states


@dataclass
class EquivalenceReport:
    max_deviation: float
    x_deviation: float
    y_deviation: float
    u_deviation: float
    iterations: int

    def to_dict(self):
        return dict(self.__dict__)


def equivalence_report(prob: ConstrainedProblem, x0, u0, iters: int) -> EquivalenceReport:
    """Compare ADMM from ``(x~0, u~0)`` with the splitting from ``w0 = b - B y~0 + u~0``.

    The sequences compared are ``(x~_{k+1}, y~_{k+1}, u~_{k+1})`` and
    ``(x_{k+1}, y_{k+1}, w_k - A x_{k+1})`` for ``k = 0, ..., iters - 1``.
    """
    iters = int(iters)
    if iters <= 0:
        return EquivalenceReport(0.0, 0.0, 0.0, 0.0, 0)
    x0 = as_point(x0, prob.f.dim, "x0")
    u0 = as_point(u0, prob.k, "u0")
    admm = admm_run(prob, x0, u0, iters + 1)
    # admm[j] holds x~_j, u~_j and y~_{j-1}
    y0 = admm[1].y
    w = prob.b - prob.B @ y0 + u0
    dev = dx = dy = du = 0.0
    for k in range(iters):
        w_next, x, y = general_dr_step(prob, w)
        u = w - prob.A @ x
        ex = np.linalg.norm(admm[k + 1].x - x)
        ey = np.linalg.norm(admm[k + 2].y - y)
        eu = np.linalg.norm(admm[k + 1].u - u)
        dx, dy, du = max(dx, ex), max(dy, ey), max(du, eu)
        dev = max(dev, float(np.sqrt(ex * ex + ey * ey + eu * eu)))
        w = w_next
    return EquivalenceReport(dev, float(dx), float(dy), float(du), iters)


def equivalence_run(prob, x0, u0, iters) -> float:
    """Largest deviation between the ADMM and splitting sequences."""
    return equivalence_report(prob, x0, u0, iters).max_deviation


# tilde functions (quadratic case) --------------------------------------------

def _min_over_preimage(h: Quadratic, M):
    """``z -> min{h(x): Mx = z}`` for strongly convex quadratic ``h`` and full-row-rank ``M``.

    Returns ``(Q~, c~)`` of the resulting quadratic, dropping the constant.
    """
    evals = np.linalg.eigvalsh(h.Q)
    if evals[0] <= 1e-12 * max(1.0, evals[-1]):
        raise ConstructionError("tilde functions need a positive definite Q")
    if np.linalg.matrix_rank(M) < M.shape[0]:
        raise ConstructionError("tilde functions need a constraint matrix of full row rank")
    Qinv_Mt = np.linalg.solve(h.Q, M.T)
    S = M @ Qinv_Mt
    Qt = np.linalg.inv(S)
    Qt = 0.5 * (Qt + Qt.T)
    ct = Qt @ (Qinv_Mt.T @ h.c)
    return Qt, ct


def tilde_functions(prob: ConstrainedProblem):
    """Explicit ``(f~, g~)`` as catalog quadratics (constants dropped).

    Needs quadratic ``f, g`` with positive definite Hessians and ``A, B`` of
    full row rank.
    """
    if not (isinstance(prob.f, Quadratic) and isinstance(prob.g, Quadratic)):
        raise ConstructionError("tilde functions are built only for quadratic f and g")
    Qf, cf = _min_over_preimage(prob.f, prob.A)
    Qg, cg = _min_over_preimage(prob.g, prob.B)
    # g~(z) = g^(b - z)
    return Quadratic(Qf, cf), Quadratic(Qg, -(Qg @ prob.b + cg))


# composition constants ----------------------------------------------------------

def relative_sc_constant(mu: float, A) -> float:
    """``mu * sigma_min^+(A)^2``: strong convexity of ``h o A`` relative to ``A^{-1}(X)``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    s = np.linalg.svd(as_matrix(A, "A"), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("A must be nonzero")
    pos = s[s > SIGMA_RTOL * s[0]]
    return float(mu * pos[-1] ** 2)


def smoothness_composed(L: float, A) -> float:
    """``L * ||A||^2``: smoothness constant of ``h o A``."""
    if not L > 0:
        raise ValueError("L must be positive")
    s = np.linalg.svd(as_matrix(A, "A"), compute_uv=False)
    return float(L * (s[0] ** 2 if s.size else 0.0))


def relative_sc_slack(mu: float, A, rng, samples: int = 200, box_halfwidth: float = 1.0) -> float:
    """Smallest slack of the relative strong-convexity inequality for ``h o A``.

    ``h = mu/2 ||.||^2`` and ``X`` is a random box around ``A y_c``, so
    ``A^{-1}(X) = {y : lo <= Ay <= hi}`` is nonempty. For sampled ``y`` with
    ``v = grad(h o A)(y)``, ``p = proj_{A^{-1}(X)}(y)`` and ``u = grad(h o A)(p)``
    returns ``min <v - u, y - p> - mu sigma^2 ||y - p||^2`` where
    ``sigma = sigma_min^+(A)``. Meant for ``n <= 6``.
    """
    A = as_matrix(A, "A")
    k, n = A.shape
    sc = relative_sc_constant(mu, A)
    yc = rng.standard_normal(n)
    center = A @ yc
    lo = center - box_halfwidth * rng.uniform(0.1, 1.0, k)
    hi = center + box_halfwidth * rng.uniform(0.1, 1.0, k)
    G = np.vstack([A, -A])
    h = np.concatenate([hi, -lo])
    grad = lambda z: mu * (A.T @ (A @ z))  # noqa: E731
    worst = np.inf
    for _ in range(samples):
        y = yc + 3.0 * rng.standard_normal(n)
        p, _ = project_polyhedron(y, G, h)
        d = y - p
        worst = min(worst, float((grad(y) - grad(p)) @ d - sc * (d @ d)))
    return worst
