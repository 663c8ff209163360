"""Catalog of closed proper convex functions with exact unit proximal maps.

Every entry evaluates itself, its proximal mapping and the proximal mapping
of its Fenchel conjugate. The conjugate prox always follows from Moreau's
decomposition ``prox_f(x) + prox_{f*}(x) = x``; entries whose conjugate has
an obvious closed form use that form as the primary computation, so the
identity is a check rather than a tautology.

Entries are immutable after construction and can be shared between runs.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._linalg import Subspace, as_matrix, as_point
from .errors import ConstructionError, DimensionError

#: Absolute (scaled by max(1, ||x||)) tolerance for indicator membership.
TAU_DOM = 1e-9

INF = float("inf")


def _dom_tol(x):
    return TAU_DOM * max(1.0, float(np.linalg.norm(x)))


class ProxFunction:
    """Base class for catalog entries.

    Subclasses implement ``_prox``, ``_scaled_prox``, ``_value`` and
    ``_conjugate_value``. ``_conjugate_prox`` defaults to Moreau; every
    catalog entry overrides it with an independent closed form so the
    decomposition can be checked.
    """

    kind = "abstract"
    is_cone = False

    def __init__(self, dim):
        self.dim = int(dim)

    # public surface -------------------------------------------------------
    def prox(self, x):
        return self._prox(as_point(x, self.dim))

    def conjugate_prox(self, x):
        return self._conjugate_prox(as_point(x, self.dim))

    def evaluate(self, x):
        return self._value(as_point(x, self.dim))

    def conjugate_value(self, y):
        return self._conjugate_value(as_point(y, self.dim, "y"))

    def scaled_prox(self, x, t):
        """prox of ``t * f``; used only by inner solvers, never by DR itself."""
        if t <= 0:
            raise ValueError("scale must be positive")
        return self._scaled_prox(as_point(x, self.dim), float(t))

    # defaults -------------------------------------------------------------
    def _conjugate_prox(self, x):
        return x - self._prox(x)

    def _scaled_prox(self, x, t):
        raise NotImplementedError

    def params(self):
        return {}

    def to_dict(self):
        return {"kind": self.kind, "params": self.params()}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class IndicatorSubspace(ProxFunction):
    kind = "indicator_subspace"
    is_cone = True

    def __init__(self, basis, n=None):
        self.subspace = basis if isinstance(basis, Subspace) else Subspace(basis, n=n)
        super().__init__(self.subspace.n)

    def _prox(self, x):
        return self.subspace.project(x)

    def _conjugate_prox(self, x):
        return self.subspace.project_perp(x)

    def _scaled_prox(self, x, t):
        return self._prox(x)

    def _value(self, x):
        return 0.0 if self.subspace.contains(x, _dom_tol(x)) else INF

    def _conjugate_value(self, y):
        ok = np.linalg.norm(self.subspace.V.T @ y) <= _dom_tol(y)
        return 0.0 if ok else INF

    def params(self):
        return {"basis": self.subspace.basis.tolist(), "n": self.dim}


class IndicatorAffine(ProxFunction):
    """Indicator of ``point + span(basis)``."""

    kind = "indicator_affine"

    def __init__(self, point, basis=None):
        point = as_point(point, name="point")
        n = point.shape[0]
        if basis is None:
            basis = np.zeros((n, 0))
        self.point = point
        self.subspace = basis if isinstance(basis, Subspace) else Subspace(basis, n=n)
        if self.subspace.n != n:
            raise DimensionError("affine basis and point disagree in dimension")
        super().__init__(n)

    def _prox(self, x):
        return self.point + self.subspace.project(x - self.point)

    def _conjugate_prox(self, x):
        # f*(u) = <u, point> on the orthogonal complement
        return self.subspace.project_perp(x - self.point)

    def _scaled_prox(self, x, t):
        return self._prox(x)

    def _value(self, x):
        ok = self.subspace.contains(x - self.point, _dom_tol(x))
        return 0.0 if ok else INF

    def _conjugate_value(self, y):
        if np.linalg.norm(self.subspace.V.T @ y) > _dom_tol(y):
            return INF
        return float(y @ self.point)

    def params(self):
        return {
            "point": self.point.tolist(),
            "basis": self.subspace.basis.tolist(),
        }


class IndicatorOrthant(ProxFunction):
    kind = "indicator_orthant"
    is_cone = True

    def _prox(self, x):
        return np.maximum(x, 0.0)

    def _conjugate_prox(self, x):
        return np.minimum(x, 0.0)

    def _scaled_prox(self, x, t):
        return self._prox(x)

    def _value(self, x):
        return 0.0 if np.all(x >= -TAU_DOM) else INF

    def _conjugate_value(self, y):
        return 0.0 if np.all(y <= TAU_DOM) else INF

    def params(self):
        return {"n": self.dim}


class IndicatorShiftedOrthant(ProxFunction):
    """Indicator of ``P = [1, inf) x R^{n-1}_+``."""

    kind = "indicator_shifted_orthant"

    def __init__(self, dim):
        if dim < 1:
            raise ConstructionError("shifted orthant needs n >= 1")
        super().__init__(dim)
        self.lower = np.zeros(self.dim)
        self.lower[0] = 1.0

    def _prox(self, x):
        return np.maximum(x, self.lower)

    def _conjugate_prox(self, x):
        # f*(u) = u_1 on the nonpositive orthant
        return np.minimum(x - self.lower, 0.0)

    def _scaled_prox(self, x, t):
        return self._prox(x)

    def _value(self, x):
        return 0.0 if np.all(x - self.lower >= -TAU_DOM) else INF

    def _conjugate_value(self, y):
        # support function of P
        if np.any(y > TAU_DOM):
            return INF
        return float(y[0])

    def params(self):
        return {"n": self.dim}


class IndicatorPolar(ProxFunction):
    """Indicator of the polar of a cone entry."""

    kind = "indicator_polar_of"
    is_cone = True

    def __init__(self, base):
        if not isinstance(base, ProxFunction) or not base.is_cone:
            raise ConstructionError("indicator_polar_of needs a cone indicator entry")
        self.base = base
        super().__init__(base.dim)

    def _prox(self, x):
        return self.base._conjugate_prox(x)

    def _conjugate_prox(self, x):
        return self.base._prox(x)

    def _scaled_prox(self, x, t):
        return self._prox(x)

    def _value(self, x):
        return self.base._conjugate_value(x)

    def _conjugate_value(self, y):
        return self.base._value(y)

    def params(self):
        return {"of": self.base.to_dict()}


class Quadratic(ProxFunction):
    """``f(x) = 1/2 x'Qx + c'x`` with ``Q`` symmetric positive semidefinite."""

    kind = "quadratic"

    def __init__(self, Q, c=None):
        Q = as_matrix(Q, "Q")
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise ConstructionError(f"Q must be square, got {Q.shape}")
        if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max(initial=0.0))):
            raise ConstructionError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        evals, evecs = np.linalg.eigh(Q) if n else (np.zeros(0), np.zeros((0, 0)))
        scale = max(1.0, float(np.abs(evals).max(initial=0.0)))
        if n and evals[0] < -1e-10 * scale:
            raise ConstructionError(f"Q is not positive semidefinite (min eigenvalue {evals[0]:.3g})")
        self.Q = Q
        self.c = np.zeros(n) if c is None else as_point(c, n, "c")
        self._evals = np.clip(evals, 0.0, None)
        self._evecs = evecs
        self._range_tol = 1e-12 * scale
        self._chol = cho_factor(np.eye(n) + Q) if n else None
        self._scaled_cache = {}
        super().__init__(n)

    @property
    def strong_convexity(self):
        return float(self._evals[0]) if self.dim else 0.0

    @property
    def smoothness(self):
        return float(self._evals[-1]) if self.dim else 0.0

    def _prox(self, x):
        return cho_solve(self._chol, x - self.c)

    def _conjugate_prox(self, x):
        # c + Q (I + Q)^{-1} (x - c), through the spectral factors
        z = self._evecs.T @ (x - self.c)
        return self.c + self._evecs @ (self._evals / (1.0 + self._evals) * z)

    def _scaled_prox(self, x, t):
        if t == 1.0:
            return self._prox(x)
        fac = self._scaled_cache.get(t)
        if fac is None:
            fac = cho_factor(np.eye(self.dim) + t * self.Q)
            self._scaled_cache[t] = fac
        return cho_solve(fac, x - t * self.c)

    def _value(self, x):
        return float(0.5 * x @ self.Q @ x + self.c @ x)

    def _conjugate_value(self, y):
        z = self._evecs.T @ (y - self.c)
        pos = self._evals > self._range_tol
        if np.any(np.abs(z[~pos]) > _dom_tol(y)):
            return INF
        return float(0.5 * np.sum(z[pos] ** 2 / self._evals[pos]))

    def params(self):
        return {"Q": self.Q.tolist(), "c": self.c.tolist()}


class ScaledL1(ProxFunction):
    """``f(x) = lam * ||x||_1``."""

    kind = "scaled_l1"

    def __init__(self, lam, n):
        if lam < 0:
            raise ConstructionError("lam must be nonnegative")
        self.lam = float(lam)
        super().__init__(n)

    def _prox(self, x):
        return self._scaled_prox(x, 1.0)

    def _scaled_prox(self, x, t):
        thr = t * self.lam
        return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)

    def _conjugate_prox(self, x):
        return np.clip(x, -self.lam, self.lam)

    def _value(self, x):
        return float(self.lam * np.abs(x).sum())

    def _conjugate_value(self, y):
        return 0.0 if np.all(np.abs(y) <= self.lam + TAU_DOM) else INF

    def params(self):
        return {"lam": self.lam, "n": self.dim}


class SeparablePiecewiseLinear(ProxFunction):
    """``f(x) = sum_i phi_i(x_i)`` with each ``phi_i`` convex piecewise linear.

    Coordinate ``i`` has strictly increasing breakpoints ``b_1 < ... < b_m``
    and nondecreasing slopes ``s_0 <= ... <= s_m`` (slope ``s_j`` holds
    between ``b_j`` and ``b_{j+1}``). Each ``phi_i`` is normalized so that
    ``phi_i(0) = 0``.
    """

    kind = "separable_piecewise_linear"

    def __init__(self, breakpoints, slopes):
        if len(breakpoints) != len(slopes):
            raise ConstructionError("need one breakpoint list and one slope list per coordinate")
        self.breakpoints = []
        self.slopes = []
        self._offsets = []
        for i, (b, s) in enumerate(zip(breakpoints, slopes)):
            b = np.asarray(b, dtype=float).reshape(-1)
            s = np.asarray(s, dtype=float).reshape(-1)
            if s.shape[0] != b.shape[0] + 1:
                raise ConstructionError(f"coordinate {i}: need len(slopes) == len(breakpoints) + 1")
            if np.any(np.diff(b) <= 0):
                raise ConstructionError(f"coordinate {i}: breakpoints must increase strictly")
            if np.any(np.diff(s) < 0):
                raise ConstructionError(f"coordinate {i}: slopes must be nondecreasing (convexity)")
            # intercepts of the affine pieces s_j t + a_j, continuous at breakpoints
            a = np.zeros(s.shape[0])
            for j in range(1, s.shape[0]):
                a[j] = a[j - 1] + (s[j - 1] - s[j]) * b[j - 1]
            a -= a.max()
            self.breakpoints.append(b)
            self.slopes.append(s)
            self._offsets.append(a)
        super().__init__(len(self.breakpoints))

    def _coord_prox(self, i, xi, t):
        b, s = self.breakpoints[i], t * self.slopes[i]
        if b.shape[0] == 0:
            return xi - s[0]
        # knots b_1+s_0, b_1+s_1, b_2+s_1, b_2+s_2, ... partition the input line
        knots = np.empty(2 * b.shape[0])
        knots[0::2] = b + s[:-1]
        knots[1::2] = b + s[1:]
        idx = np.searchsorted(knots, xi)
        seg = idx // 2
        if idx % 2 == 0:
            return xi - s[seg]
        return b[seg]

    def _scaled_prox(self, x, t):
        return np.array([self._coord_prox(i, x[i], t) for i in range(self.dim)], dtype=float)

    def _prox(self, x):
        return self._scaled_prox(x, 1.0)

    def _coord_conj(self, i, y):
        b, s, a = self.breakpoints[i], self.slopes[i], self._offsets[i]
        if b.shape[0] == 0:
            return -a[0]
        return float(np.max(y * b - np.array([np.max(s * bj + a) for bj in b])))

    def _conjugate_prox(self, x):
        # phi_i* is piecewise linear on [s_0, s_m] with slope b_j on [s_{j-1}, s_j];
        # minimize phi_i*(y) + (y - x_i)^2 / 2 segment by segment
        out = np.empty(self.dim)
        for i in range(self.dim):
            b, s = self.breakpoints[i], self.slopes[i]
            if b.shape[0] == 0:
                out[i] = s[0]
                continue
            best, best_val = None, INF
            for j in range(b.shape[0]):
                y = min(max(x[i] - b[j], s[j]), s[j + 1])
                val = self._coord_conj(i, y) + 0.5 * (y - x[i]) ** 2
                if val < best_val:
                    best, best_val = y, val
            out[i] = best
        return out

    def _value(self, x):
        return float(sum(np.max(s * x[i] + a) for i, (s, a) in enumerate(zip(self.slopes, self._offsets))))

    def _conjugate_value(self, y):
        total = 0.0
        for i in range(self.dim):
            s = self.slopes[i]
            if y[i] < s[0] - TAU_DOM or y[i] > s[-1] + TAU_DOM:
                return INF
            total += self._coord_conj(i, y[i])
        return total

    def params(self):
        return {
            "breakpoints": [b.tolist() for b in self.breakpoints],
            "slopes": [s.tolist() for s in self.slopes],
        }


class Conjugate(ProxFunction):
    """Fenchel conjugate ``f*`` of a catalog entry."""

    kind = "conjugate_of"

    def __init__(self, base):
        self.base = base
        self.is_cone = base.is_cone
        super().__init__(base.dim)

    def _prox(self, x):
        return self.base._conjugate_prox(x)

    def _conjugate_prox(self, x):
        return self.base._prox(x)

    def _scaled_prox(self, x, t):
        # scaled Moreau: prox_{t f*}(x) = x - t prox_{f/t}(x/t)
        return x - t * self.base._scaled_prox(x / t, 1.0 / t)

    def _value(self, x):
        return self.base._conjugate_value(x)

    def _conjugate_value(self, y):
        return self.base._value(y)

    def params(self):
        return {"of": self.base.to_dict()}


class Reflected(ProxFunction):
    """``h(u) = f(-u)``."""

    kind = "reflected"

    def __init__(self, base):
        self.base = base
        super().__init__(base.dim)

    def _prox(self, x):
        return -self.base._prox(-x)

    def _conjugate_prox(self, x):
        return -self.base._conjugate_prox(-x)

    def _scaled_prox(self, x, t):
        return -self.base._scaled_prox(-x, t)

    def _value(self, x):
        return self.base._value(-x)

    def _conjugate_value(self, y):
        return self.base._conjugate_value(-y)

    def params(self):
        return {"of": self.base.to_dict()}


# constructors ---------------------------------------------------------------

def indicator_subspace(basis, n=None):
    return IndicatorSubspace(basis, n=n)


def indicator_affine(point, basis=None):
    return IndicatorAffine(point, basis)


def indicator_orthant(n):
    return IndicatorOrthant(n)


def indicator_shifted_orthant(n):
    return IndicatorShiftedOrthant(n)


def indicator_polar_of(entry):
    return IndicatorPolar(entry)


def quadratic(Q, c=None):
    return Quadratic(Q, c)


def scaled_l1(lam, n):
    return ScaledL1(lam, n)


def separable_piecewise_linear(breakpoints, slopes):
    return SeparablePiecewiseLinear(breakpoints, slopes)


def zero(n):
    return Quadratic(np.zeros((n, n)), np.zeros(n))


def conjugate(f):
    """``f*``; conjugating twice returns the original entry."""
    if isinstance(f, Conjugate):
        return f.base
    return Conjugate(f)


def reflected(f):
    """``u -> f(-u)``."""
    if isinstance(f, Reflected):
        return f.base
    return Reflected(f)


def dual_pair(f, g):
    """Return ``(f*, g_*)`` with ``g_*(u) = g*(-u)``: the pair DR sees on the dual problem."""
    return conjugate(f), reflected(conjugate(g))


# functional surface ----------------------------------------------------------

def prox(f, x):
    return f.prox(x)


def conjugate_prox(f, x):
    return f.conjugate_prox(x)


def evaluate(f, x):
    return f.evaluate(x)


# serialization --------------------------------------------------------------

def from_dict(spec):
    """Build a catalog entry from ``{"kind": ..., "params": {...}}``."""
    try:
        kind = spec["kind"]
        p = spec.get("params", {})
    except (TypeError, KeyError) as exc:
        raise ConstructionError(f"catalog entry needs 'kind' and 'params': {spec!r}") from exc
    try:
        if kind == "indicator_subspace":
            return IndicatorSubspace(p["basis"], n=p.get("n"))
        if kind == "indicator_affine":
            point = p["point"]
            basis = p.get("basis")
            if basis is not None:
                basis = np.asarray(basis, dtype=float).reshape(len(point), -1)
            return IndicatorAffine(point, basis)
        if kind == "indicator_orthant":
            return IndicatorOrthant(int(p["n"]))
        if kind == "indicator_shifted_orthant":
            return IndicatorShiftedOrthant(int(p["n"]))
        if kind == "indicator_polar_of":
            return IndicatorPolar(from_dict(p["of"]))
        if kind == "quadratic":
            return Quadratic(p["Q"], p.get("c"))
        if kind == "scaled_l1":
            return ScaledL1(float(p["lam"]), int(p["n"]))
        if kind == "separable_piecewise_linear":
            return SeparablePiecewiseLinear(p["breakpoints"], p["slopes"])
        if kind == "conjugate_of":
            return Conjugate(from_dict(p["of"]))
        if kind == "reflected":
            return Reflected(from_dict(p["of"]))
    except KeyError as exc:
        raise ConstructionError(f"{kind}: missing parameter {exc.args[0]!r}") from exc
    raise ConstructionError(f"unknown catalog kind {kind!r}")


CATALOG_KINDS = (
    "indicator_subspace",
    "indicator_affine",
    "indicator_orthant",
    "indicator_shifted_orthant",
    "indicator_polar_of",
    "quadratic",
    "scaled_l1",
    "separable_piecewise_linear",
)
