"""The Douglas-Rachford operator and the plain (unrelaxed, unit-prox) iteration.

For ``min f(x) + g(x)`` the operator is

    F(w) = w + prox_g(2 prox_f(w) - w) - prox_f(w)

and one step of the algorithm computes ``x = prox_f(w)``,
``y = prox_g(2x - w)`` and ``F(w) = w + y - x``. The dual iterates
``u = w - x = prox_{f*}(w)`` and ``v = y - 2x + w = prox_{g_*}(2u - w)`` are
materialized on every step so the primal/dual symmetry of the method can be
checked on any run.
"""

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from ._linalg import EPS, SNAP_FACTOR, as_point
from .errors import DimensionError
from .prox_catalog import ProxFunction, dual_pair

RESIDUAL_BELOW_TOL = "residual_below_tol"
MAX_ITERS = "max_iters"
EXACT_FIXED_POINT = "exact_fixed_point"

MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class StopRule:
    """When to stop :func:`run`.

    ``exact_zero`` ends the run as soon as ``F(w) = w`` holds in floating
    point: either bitwise, or with a residual below the rounding floor of a
    single operator evaluation (``16 n eps ||w||``).
    """

    tol: float = 1e-10
    max_iters: int = 100_000
    exact_zero: bool = True

    def __post_init__(self):
        if not self.tol >= 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")


@dataclass(frozen=True)
class DRState:
    """One step of the iteration started from ``w_{k-1}``.

    ``w`` is the new governing iterate ``F(w_{k-1})``; ``x``, ``y`` the primal
    prox outputs; ``u``, ``v`` the implicit dual iterates; ``residual`` is
    ``||w_k - w_{k-1}||``.
    """

    k: int
    w: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    residual: float

    def to_dict(self):
        return {
            "k": self.k,
            "w": self.w.tolist(),
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "u": self.u.tolist(),
            "v": self.v.tolist(),
            "residual": self.residual,
        }


@dataclass
class DRTrace:
    """Full history of a run."""

    w0: np.ndarray
    states: List[DRState]
    stop_reason: str
    config: dict
    warnings: List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    @property
    def final(self):
        return self.states[-1] if self.states else None

    @property
    def iterates(self):
        """Array of ``w_0, w_1, ..., w_K`` (K + 1 rows)."""
        return np.vstack([self.w0] + [s.w for s in self.states])

    @property
    def residuals(self):
        return np.array([s.residual for s in self.states])

    def to_dict(self, include_states=True):
        out = {
            "stop_reason": self.stop_reason,
            "iterations": len(self.states),
            "config": self.config,
            "w0": self.w0.tolist(),
            "warnings": list(self.warnings),
        }
        if include_states:
            out["states"] = [s.to_dict() for s in self.states]
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    def to_csv(self, dist: Optional[Callable] = None):
        """CSV with columns ``k, residual, dist_to_Wbar``.

        ``dist`` maps an iterate to its distance from the fixed-point set; the
        column is left empty without it.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "residual", "dist_to_Wbar"])
        for s in self.states:
            d = "" if dist is None else repr(float(dist(s.w)))
            writer.writerow([s.k, repr(float(s.residual)), d])
        return buf.getvalue()


def _check_pair(f, g, w):
    if f.dim != g.dim:
        raise DimensionError(f"f has dimension {f.dim} but g has dimension {g.dim}")
    return as_point(w, f.dim, "w")


def dr_operator(f: ProxFunction, g: ProxFunction, w, k: int = 0) -> DRState:
    """Evaluate the operator at ``w`` and return the full state."""
    w = _check_pair(f, g, w)
    x = f.prox(w)
    y = g.prox(2.0 * x - w)
    w_next = w + (y - x)
    u = w - x
    v = y - 2.0 * x + w
    return DRState(k, w_next, x, y, u, v, float(np.linalg.norm(w_next - w)))


def apply(f, g, w):
    """``F(w)`` only."""
    return dr_operator(f, g, w).w


def _fp_floor(w):
    return SNAP_FACTOR * w.shape[0] * EPS * float(np.linalg.norm(w))


def run(f: ProxFunction, g: ProxFunction, w0, stop: StopRule = StopRule()) -> DRTrace:
    """Iterate ``w_{k+1} = F(w_k)`` from ``w0`` until ``stop`` fires.

    A residual that grows by more than 1e-9 from one step to the next
    contradicts nonexpansiveness; such steps are recorded in
    ``trace.warnings`` and emitted as :class:`RuntimeWarning`.
    """
    w = _check_pair(f, g, w0).copy()
    w0 = w.copy()
    states = []
    notes = []
    reason = MAX_ITERS
    prev_res = None
    for k in range(1, int(stop.max_iters) + 1):
        s = dr_operator(f, g, w, k=k)
        states.append(s)
        if prev_res is not None and s.residual > prev_res + MONOTONE_SLACK:
            msg = f"residual increased at k={k}: {prev_res:.3e} -> {s.residual:.3e}"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        if stop.exact_zero and (s.residual == 0.0 or s.residual <= _fp_floor(w)):
            reason = EXACT_FIXED_POINT
            break
        if s.residual <= stop.tol:
            reason = RESIDUAL_BELOW_TOL
            break
        prev_res = s.residual
        w = s.w
    config = {"stop": asdict(stop), "f": f.kind, "g": g.kind, "dim": f.dim}
    return DRTrace(w0, states, reason, config, notes)


class DualSwapResult(NamedTuple):
    primal: DRTrace
    dual: DRTrace
    max_deviation: float
    u_deviation: float
    v_deviation: float


def dual_swap_run(f, g, w0, stop: StopRule = StopRule(tol=0.0, max_iters=100, exact_zero=False)):
    """Run the algorithm on ``(f, g)`` and on ``(f*, g_*)`` from the same start.

    Returns both traces, the largest ``||w~_k - w_k||`` and the largest
    deviations in the correspondences ``u~_{k+1} = w_k - x_{k+1}`` and
    ``v~_{k+1} = y_{k+1} - 2 x_{k+1} + w_k``, where ``u~, v~`` are the prox
    outputs of the dual run.
    """
    fd, gd = dual_pair(f, g)
    primal = run(f, g, w0, stop)
    dual = run(fd, gd, w0, stop)
    m = min(len(primal), len(dual))
    dev = u_dev = v_dev = 0.0
    for p, d in zip(primal.states[:m], dual.states[:m]):
        dev = max(dev, float(np.linalg.norm(d.w - p.w)))
        u_dev = max(u_dev, float(np.linalg.norm(d.x - p.u)))
        v_dev = max(v_dev, float(np.linalg.norm(d.y - p.v)))
    return DualSwapResult(primal, dual, dev, u_dev, v_dev)


def firm_nonexpansive_check(f, g, pairs) -> float:
    """Smallest ``<F(w)-F(w'), w-w'> - ||F(w)-F(w')||^2`` over ``pairs``."""
    worst = np.inf
    for w, w_hat in pairs:
        w, w_hat = np.asarray(w, float), np.asarray(w_hat, float)
        d = apply(f, g, w) - apply(f, g, w_hat)
        worst = min(worst, float(d @ (w - w_hat) - d @ d))
    return worst


def lipschitz_check(f, g, pairs) -> float:
    """Smallest ``||w-w'|| - ||F(w)-F(w')||`` over ``pairs``."""
    worst = np.inf
    for w, w_hat in pairs:
        w, w_hat = np.asarray(w, float), np.asarray(w_hat, float)
        d = apply(f, g, w) - apply(f, g, w_hat)
        worst = min(worst, float(np.linalg.norm(w - w_hat) - np.linalg.norm(d)))
    return worst


def fixed_point_certificate(f, g, w, tol=1e-9):
    """Check the optimality conditions carried by a fixed point ``w``.

    With ``x = prox_f(w)`` and ``u = w - x`` the pair solves
    ``u in df(x)`` and ``-u in dg(x)`` iff ``x = prox_f(x + u)`` and
    ``x = prox_g(x - u)``. Returns ``(ok, x, u, err_f, err_g)``.
    """
    w = _check_pair(f, g, w)
    x = f.prox(w)
    u = w - x
    err_f = float(np.linalg.norm(f.prox(x + u) - x))
    err_g = float(np.linalg.norm(g.prox(x - u) - x))
    return err_f <= tol and err_g <= tol, x, u, err_f, err_g
