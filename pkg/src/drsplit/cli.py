"""Command-line front end.

    drsplit solve FILE      run the splitting method, write trace and report
    drsplit supports FILE   Goldman-Tucker partition for a subspace vs the orthant
    drsplit diagnose FILE   constants, rate fits and oracle cross-checks

Exit codes: 0 success, 1 bad input, 2 iteration budget exhausted,
3 ambiguous supports, 4 oracle disagreement.
"""

import argparse
import json
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np
from jsonschema import Draft7Validator

from . import conic, constrained, diagnostics, dr_core
from .errors import AmbiguousSupportError, ConstructionError, InnerSolverError, OracleError
from .prox_catalog import Quadratic, from_dict as entry_from_dict

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MAX_ITERS = 2
EXIT_AMBIGUOUS = 3
EXIT_ORACLE = 4

SCHEMA_VERSION = "1.0"
MODES = (
    "unconstrained",
    "conic",
    "subspace_orthant",
    "affine_orthant",
    "constrained",
    "diag_qp",
    "trace_replay",
)

_vector = {"type": "array", "items": {"type": "number"}}
_matrix = {"type": "array", "items": _vector}
_entry = {"type": "object", "required": ["kind"], "properties": {"kind": {"type": "string"}, "params": {"type": "object"}}}
_cone = {"type": "object", "required": ["kind"], "properties": {"kind": {"type": "string"}}}

PAYLOAD_SCHEMAS = {
    "unconstrained": {
        "type": "object",
        "required": ["f", "g"],
        "properties": {
            "f": _entry,
            "g": _entry,
            "w0": _vector,
            "strong_convexity": {
                "type": "object",
                "required": ["mu", "mu_star"],
                "properties": {"mu": {"type": "number"}, "mu_star": {"type": "number"}},
            },
        },
    },
    "conic": {"type": "object", "required": ["C", "K"], "properties": {"C": _cone, "K": _cone, "w0": _vector}},
    "subspace_orthant": {
        "type": "object",
        "oneOf": [{"required": ["basis"]}, {"required": ["basis_csv"]}, {"required": ["random"]}],
        "properties": {
            "basis": _matrix,
            "basis_csv": {"type": "string"},
            "n": {"type": "integer", "minimum": 1},
            "random": {
                "type": "object",
                "required": ["n"],
                "properties": {"n": {"type": "integer", "minimum": 1}, "structured": {"type": "boolean"}},
            },
            "w0": _vector,
        },
    },
    "affine_orthant": {
        "type": "object",
        "required": ["point"],
        "properties": {"point": _vector, "basis": _matrix, "w0": _vector},
    },
    "constrained": {
        "type": "object",
        "required": ["f", "g", "A", "B", "b"],
        "properties": {
            "f": _entry,
            "g": _entry,
            "A": _matrix,
            "B": _matrix,
            "b": _vector,
            "w0": _vector,
            "x0": _vector,
            "u0": _vector,
            "iters": {"type": "integer", "minimum": 0},
        },
    },
    "diag_qp": {
        "type": "object",
        "required": ["d", "c", "J"],
        "properties": {
            "d": _vector,
            "c": _vector,
            "J": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            "R": {"type": "number", "exclusiveMinimum": 0},
            "samples": {"type": "integer", "minimum": 1},
        },
    },
    "trace_replay": {
        "type": "object",
        "required": ["residuals"],
        "properties": {"residuals": _vector, "window": {"type": "integer", "minimum": 1}},
    },
}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "mode", "payload"],
    "properties": {
        "schema_version": {"type": "string"},
        "mode": {"enum": list(MODES)},
        "payload": {"type": "object"},
        "solver": {
            "type": "object",
            "properties": {
                "tol": {"type": "number", "minimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "exact_zero": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer"},
    },
}


class InputError(ValueError):
    """Malformed problem file."""


def _validate(instance, schema, prefix):
    errors = sorted(Draft7Validator(schema).iter_errors(instance), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = ".".join([prefix] + [str(p) for p in e.path]) if prefix or e.path else "<root>"
        raise InputError(f"field {where}: {e.message}")


def _canonical(obj):
    """Normalize numbers so equal problems serialize to equal bytes."""
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj):
    return json.dumps(_canonical(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


@dataclass
class ProblemFile:
    """A validated problem description."""

    mode: str
    payload: dict
    solver: dict = field(default_factory=dict)
    seed: int = 0
    schema_version: str = SCHEMA_VERSION
    base_dir: str = field(default=".", compare=False, repr=False)  # resolves relative CSV paths

    @classmethod
    def from_dict(cls, d, base_dir="."):
        _validate(d, PROBLEM_SCHEMA, "")
        if d["schema_version"] != SCHEMA_VERSION:
            raise InputError(f"field schema_version: unsupported version {d['schema_version']!r}")
        mode = d["mode"]
        _validate(d["payload"], PAYLOAD_SCHEMAS[mode], "payload")
        pf = cls(mode, d["payload"], d.get("solver", {}), int(d.get("seed", 0)), d["schema_version"], base_dir)
        pf.build()  # dimension checks before any solve
        return pf

    @classmethod
    def loads(cls, text, base_dir="."):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(d, base_dir)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.loads(fh.read(), os.path.dirname(os.path.abspath(path)))

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "mode": self.mode,
            "payload": self.payload,
            "solver": self.solver,
            "seed": self.seed,
        }

    def dumps(self):
        return dumps_canonical(self.to_dict())

    def self_contained(self):
        """Copy with any CSV basis inlined, so the file re-parses anywhere."""
        if "basis_csv" not in self.payload:
            return self
        payload = {k: v for k, v in self.payload.items() if k != "basis_csv"}
        payload["basis"] = self._basis().tolist()
        return ProblemFile(self.mode, payload, dict(self.solver), self.seed, self.schema_version)

    def stop_rule(self, tol=None, max_iters=None):
        s = dict(self.solver)
        if tol is not None:
            s["tol"] = tol
        if max_iters is not None:
            s["max_iters"] = max_iters
        return dr_core.StopRule(**s)

    def rng(self):
        return np.random.default_rng(self.seed)

    # problem construction ---------------------------------------------------
    def _basis(self):
        p = self.payload
        if "basis" in p:
            return np.asarray(p["basis"], dtype=float).reshape(len(p["basis"]), -1) if p["basis"] else np.zeros((p.get("n", 0), 0))
        if "basis_csv" in p:
            path = p["basis_csv"]
            if not os.path.isabs(path):
                path = os.path.join(self.base_dir, path)
            try:
                return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
            except OSError as exc:
                raise InputError(f"field payload.basis_csv: {exc}") from exc
        r = p["random"]
        return conic.random_subspace(int(r["n"]), self.rng(), r.get("structured"))

    def build(self):
        """Construct the in-memory problem; raises :class:`InputError` on inconsistency."""
        p = self.payload
        try:
            if self.mode in ("unconstrained",):
                f, g = entry_from_dict(p["f"]), entry_from_dict(p["g"])
                if f.dim != g.dim:
                    raise InputError(f"payload: f has dimension {f.dim}, g has {g.dim}")
                w0 = np.asarray(p.get("w0", np.zeros(f.dim)), dtype=float)
                if w0.shape != (f.dim,):
                    raise InputError(f"field payload.w0: expected length {f.dim}")
                return {"f": f, "g": g, "w0": w0}
            if self.mode == "conic":
                C, K = conic.cone_from_dict(p["C"]), conic.cone_from_dict(p["K"])
                if C.n != K.n:
                    raise InputError(f"payload: C lives in R^{C.n}, K in R^{K.n}")
                w0 = np.asarray(p.get("w0", np.ones(C.n)), dtype=float)
                if w0.shape != (C.n,):
                    raise InputError(f"field payload.w0: expected length {C.n}")
                return {"C": C, "K": K, "w0": w0}
            if self.mode == "subspace_orthant":
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    L = conic.as_subspace(self._basis())
                w0 = np.asarray(p.get("w0", np.ones(L.n)), dtype=float)
                if w0.shape != (L.n,):
                    raise InputError(f"field payload.w0: expected length {L.n}")
                return {"L": L, "w0": w0, "warnings": [str(w.message) for w in caught]}
            if self.mode == "affine_orthant":
                point = p["point"]
                basis = p.get("basis")
                if basis is not None and basis and len(basis) != len(point):
                    raise InputError("field payload.basis: row count must match the point length")
                lifted = conic.homogenize(point, basis if basis else None)
                L = conic.as_subspace(lifted)
                w0 = np.asarray(p.get("w0", np.ones(L.n)), dtype=float)
                if w0.shape != (L.n,):
                    raise InputError(f"field payload.w0: expected length {L.n}")
                return {"L": L, "w0": w0}
            if self.mode == "constrained":
                prob = constrained.ConstrainedProblem.from_dict(p)
                out = {"problem": prob}
                out["w0"] = np.asarray(p.get("w0", np.zeros(prob.k)), dtype=float)
                out["x0"] = np.asarray(p.get("x0", np.zeros(prob.f.dim)), dtype=float)
                out["u0"] = np.asarray(p.get("u0", np.zeros(prob.k)), dtype=float)
                for name, n in (("w0", prob.k), ("x0", prob.f.dim), ("u0", prob.k)):
                    if out[name].shape != (n,):
                        raise InputError(f"field payload.{name}: expected length {n}")
                return out
            if self.mode == "diag_qp":
                J = [j - 1 for j in p["J"]]
                inst = diagnostics.DiagQPInstance(p["d"], p["c"], J, p.get("R", diagnostics.DEFAULT_R))
                return {"instance": inst}
            if self.mode == "trace_replay":
                return {"residuals": np.asarray(p["residuals"], dtype=float)}
        except InputError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"payload: {exc}") from exc
        raise InputError(f"unknown mode {self.mode!r}")


# ---------------------------------------------------------------------------
# helpers


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _emit_trace(trace, out, fmt, dist=None):
    if fmt == "csv":
        path = os.path.join(out, "trace.csv")
        _write(path, trace.to_csv(dist))
    else:
        path = os.path.join(out, "trace.json")
        d = trace.to_dict()
        if dist is not None:
            d["dist_to_Wbar"] = [dist(s.w) for s in trace.states]
        _write(path, dumps_canonical(d))
    return path


def _auto_window(n_res):
    return max(2, min(diagnostics.DEFAULT_WINDOW, n_res - 2))


def _rate_report(trace, dist=None, predicted_H=None):
    n = len(trace)
    try:
        return diagnostics.fit_rate(trace, _auto_window(n), dist=dist, predicted_H=predicted_H)
    except ValueError:
        rep = diagnostics.DiagnosticsReport(None, iterations=n)
        if predicted_H is not None:
            rep.predicted_H = float(predicted_H)
            rep.rate_bound = diagnostics.rate_bound(predicted_H)
        rep.notes.append("trace too short for a rate fit")
        return rep


def _unconstrained_oracle(f, g, payload):
    dist, H = None, None
    if isinstance(f, Quadratic) and isinstance(g, Quadratic):
        if np.linalg.eigvalsh(f.Q + g.Q)[0] > 1e-12:
            dist = diagnostics.singleton_dist(diagnostics.quadratic_pair_fixed_point(f, g))
        if max(f.strong_convexity, g.strong_convexity) > 0 and max(f.smoothness, g.smoothness) > 0:
            H = diagnostics.quadratic_pair_H(f, g)
    sc = payload.get("strong_convexity")
    if sc is not None:
        H = diagnostics.strong_convexity_H(sc["mu"], sc["mu_star"])
    return dist, H


def _exit_for(trace):
    return EXIT_MAX_ITERS if trace.stop_reason == dr_core.MAX_ITERS else EXIT_OK


def _print_json(obj):
    sys.stdout.write(dumps_canonical(obj))


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(pf: ProblemFile, args):
    built = pf.build()
    stop = pf.stop_rule(args.tol, args.max_iters)
    out = args.out
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, "problem.json"), pf.self_contained().dumps())
    report = {"mode": pf.mode, "seed": pf.seed}
    mode = pf.mode
    dist = None
    if mode == "unconstrained":
        f, g = built["f"], built["g"]
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always")
            trace = dr_core.run(f, g, built["w0"], stop)
        dist, H = _unconstrained_oracle(f, g, pf.payload)
        rep = _rate_report(trace, dist, H)
        last = trace.final
        ok, x, u, ef, eg = dr_core.fixed_point_certificate(f, g, last.w)
        report.update(rep.to_dict())
        report.update({"x": x, "u": u, "certificate_errors": [ef, eg]})
    elif mode == "conic":
        C, K = built["C"], built["K"]
        trace = dr_core.run(conic.indicator(C), conic.indicator(K), built["w0"], stop)
        w = trace.final.w
        wc, wp = C.decompose(w) if C.is_cone else (C.project(w), w - C.project(w))
        report.update({"w_C": wc, "w_Cpolar": wp, "norm_C": float(np.linalg.norm(wc)), "norm_Cpolar": float(np.linalg.norm(wp))})
    elif mode in ("subspace_orthant", "affine_orthant"):
        L = built["L"]
        K = conic.orthant(L.n) if mode == "subspace_orthant" else conic.shifted_orthant(L.n)
        trace = dr_core.run(conic.indicator(conic.subspace(L)), conic.indicator(K), built["w0"], stop)
        x, u = L.components(trace.final.w)
        report.update({"x": x, "u": u})
        if mode == "subspace_orthant":
            report["warnings"] = built["warnings"]
            if L.n <= diagnostics.ORACLE_MAX_N:
                dist = diagnostics.subspace_orthant_dist(L)
            try:
                part = conic.identify_supports(L, built["w0"], stop)
                report["supports"] = part.to_dict()
                report["supp_L"] = report["supports"]["supp_L"]
                report["supp_Lperp"] = report["supports"]["supp_Lperp"]
            except AmbiguousSupportError as exc:
                report["supports_error"] = str(exc)
        else:
            feasible = x[0] > 1e-12 and np.all(x >= -1e-9)
            report["feasible_point"] = (x[1:] / x[0]).tolist() if feasible else None
        report["stop_reason"] = trace.stop_reason
    elif mode == "constrained":
        prob = built["problem"]
        trace = constrained.dr_run(prob, built["w0"], stop)
        last = trace.final
        report.update(
            {
                "x": last.x,
                "y": last.y,
                "u": last.u,
                "constraint_violation": float(np.linalg.norm(prob.A @ last.x + prob.B @ last.y - prob.b)),
            }
        )
        report.update(_rate_report(trace).to_dict())
    else:
        raise InputError(f"mode {mode!r} has nothing to solve; use 'diagnose'")
    report["stop_reason"] = trace.stop_reason
    report["iterations"] = len(trace)
    report["final_residual"] = trace.final.residual if len(trace) else None
    report["warnings"] = list(report.get("warnings", [])) + list(trace.warnings)
    _emit_trace(trace, out, args.trace_format, dist)
    _write(os.path.join(out, "report.json"), dumps_canonical(report))
    _print_json({k: report[k] for k in ("mode", "stop_reason", "iterations", "final_residual")})
    return _exit_for(trace)


def cmd_supports(pf: ProblemFile, args):
    if pf.mode not in ("subspace_orthant", "affine_orthant"):
        raise InputError("supports needs mode subspace_orthant or affine_orthant")
    built = pf.build()
    L = built["L"]
    stop = pf.stop_rule(args.tol, args.max_iters)
    os.makedirs(args.out, exist_ok=True)
    try:
        part = conic.identify_supports(L, built["w0"], stop)
    except AmbiguousSupportError as exc:
        info = {"error": "ambiguous supports", "ambiguous": sorted(i + 1 for i in exc.ambiguous), "message": str(exc)}
        _write(os.path.join(args.out, "supports.json"), dumps_canonical(info))
        _print_json(info)
        return EXIT_AMBIGUOUS
    out = part.to_dict()
    out["warnings"] = built.get("warnings", [])
    code = EXIT_OK
    if args.oracle:
        ref = diagnostics.support_partition_oracle(L)
        out["oracle"] = {"supp_L": [i + 1 for i in ref.supp_L], "supp_Lperp": [i + 1 for i in ref.supp_Lperp]}
        out["oracle_match"] = part.same_partition(ref)
        if not out["oracle_match"]:
            code = EXIT_ORACLE
    _write(os.path.join(args.out, "supports.json"), dumps_canonical(out))
    _print_json(out)
    return code


def cmd_diagnose(pf: ProblemFile, args):
    built = pf.build()
    mode = pf.mode
    stop = pf.stop_rule(args.tol, args.max_iters)
    report = {"mode": mode, "seed": pf.seed}
    code = EXIT_OK
    if mode == "diag_qp":
        inst = built["instance"]
        H, feasible = diagnostics.diag_qp_hoffman(inst)
        tight, _ = diagnostics.diag_qp_hoffman_tight(inst)
        samples = int(pf.payload.get("samples", 100_000))
        report.update(
            {
                "instance": inst.to_dict(),
                "H_exact": H,
                "feasible_piece": feasible,
                "H_tight": tight,
                "gap": diagnostics.diag_qp_gap(inst),
                "gap_bound": diagnostics.diag_qp_gap_bound(inst) if not feasible else None,
            }
        )
        if inst.n <= 4:
            report["H_bruteforce_lower_bound"] = diagnostics.diag_qp_hoffman_bruteforce(inst, samples, pf.rng())
            report["samples"] = samples
    elif mode == "constrained":
        prob = built["problem"]
        iters = int(pf.payload.get("iters", 100))
        eq = constrained.equivalence_report(prob, built["x0"], built["u0"], iters)
        report.update(eq.to_dict())
    elif mode == "trace_replay":
        res = built["residuals"]
        window = int(pf.payload.get("window", _auto_window(len(res))))
        report.update(diagnostics.fit_rate(res, window).to_dict())
    elif mode == "unconstrained":
        f, g = built["f"], built["g"]
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always")
            trace = dr_core.run(f, g, built["w0"], stop)
        dist, H = _unconstrained_oracle(f, g, pf.payload)
        report.update(_rate_report(trace, dist, H).to_dict())
        report["stop_reason"] = trace.stop_reason
    elif mode == "subspace_orthant":
        L = built["L"]
        trace = dr_core.run(conic.indicator(conic.subspace(L)), conic.indicator(conic.orthant(L.n)), built["w0"], stop)
        dist = diagnostics.subspace_orthant_dist(L) if L.n <= diagnostics.ORACLE_MAX_N else None
        report.update(_rate_report(trace, dist).to_dict())
        report["stop_reason"] = trace.stop_reason
    elif mode == "conic":
        C, K = built["C"], built["K"]
        samples = int(pf.payload.get("samples", 10_000))
        try:
            report["subtransversality_lower_bound"] = diagnostics.subtransversality_estimate(C, K, samples, pf.rng())
            report["samples"] = samples
        except OracleError as exc:
            report["subtransversality_error"] = str(exc)
    else:
        raise InputError(f"mode {mode!r} has no diagnostics")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "report.json"), dumps_canonical(report))
    _print_json(report)
    return code


def build_parser():
    parser = argparse.ArgumentParser(prog="drsplit", description="Douglas-Rachford splitting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("solve", "run the method and write trace and report"),
        ("supports", "identify supp(L) and supp(L-perp)"),
        ("diagnose", "constants, rates and oracle checks"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("file", help="problem file (JSON)")
        p.add_argument("--tol", type=float, default=None, help="residual tolerance")
        p.add_argument("--max-iters", type=int, default=None, help="iteration budget")
        p.add_argument("--seed", type=int, default=None, help="override the file's seed")
        p.add_argument("--oracle", action="store_true", help="cross-check against the brute-force oracle")
        p.add_argument("--trace-format", choices=("json", "csv"), default="json")
        p.add_argument("--out", default="drsplit_out" if name == "solve" else None, help="output directory")
    return parser


COMMANDS = {"solve": cmd_solve, "supports": cmd_supports, "diagnose": cmd_diagnose}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.out is None:
        args.out = "drsplit_out" if args.command == "supports" else None
    try:
        pf = ProblemFile.load(args.file)
        if args.seed is not None:
            pf.seed = args.seed
        if args.tol is not None and args.tol < 0:
            raise InputError("--tol must be >= 0")
        if args.max_iters is not None and args.max_iters < 1:
            raise InputError("--max-iters must be >= 1")
        return COMMANDS[args.command](pf, args)
    except (InputError, ConstructionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, InnerSolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
