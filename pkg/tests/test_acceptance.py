"""Acceptance suite: one recorded PASS/FAIL line per criterion (or sub-criterion)."""

import time

import numpy as np
import pytest

from drsplit import conic, constrained, diagnostics, dr_core
from drsplit import prox_catalog as pc
from drsplit.constrained import ConstrainedProblem
from drsplit.diagnostics import DiagQPInstance
from drsplit.dr_core import StopRule

from conftest import catalog_entries, random_psd

pytestmark = pytest.mark.acceptance


def _pair_families(rng, n):
    L = rng.standard_normal((n, max(1, n // 2)))
    e = catalog_entries(rng, n)
    return {
        "quadratic/quadratic": (pc.quadratic(random_psd(rng, n)), pc.quadratic(random_psd(rng, n, rank=1), rng.standard_normal(n))),
        "l1/quadratic": (pc.scaled_l1(0.8, n), pc.quadratic(random_psd(rng, n), rng.standard_normal(n))),
        "subspace/orthant": (pc.indicator_subspace(L), pc.indicator_orthant(n)),
        "affine/shifted_orthant": (e[1], pc.indicator_shifted_orthant(n)),
        "polar/orthant": (pc.indicator_polar_of(pc.indicator_subspace(L)), pc.indicator_orthant(n)),
        "piecewise_linear/l1": (e[9], pc.scaled_l1(0.3, n)),
        "conjugate/reflected": (e[10], e[11]),
        "orthant/l1": (pc.indicator_orthant(n), pc.scaled_l1(1.5, n)),
    }


def test_criterion_1_moreau(criterion):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for n in (1, 4):
        for f in catalog_entries(rng, n):
            X = 5.0 * rng.standard_normal((1000, n))
            for x in X:
                worst = max(worst, float(np.max(np.abs(f.prox(x) + f.conjugate_prox(x) - x))))
            count += 1
    dt = time.perf_counter() - t0
    criterion("1 (Moreau)", worst <= 1e-10 and dt < 5.0, f"{count} entries x 1000 points, max err {worst:.2e}, {dt:.2f}s")


def test_criterion_2_operator_laws(criterion):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst_fne, worst_lip = np.inf, np.inf
    n = 4
    fams = _pair_families(rng, n)
    for f, g in fams.values():
        pairs = [(4 * rng.standard_normal(n), 4 * rng.standard_normal(n)) for _ in range(1000)]
        worst_fne = min(worst_fne, dr_core.firm_nonexpansive_check(f, g, pairs))
        worst_lip = min(worst_lip, dr_core.lipschitz_check(f, g, pairs))
    dt = time.perf_counter() - t0
    ok = worst_fne >= -1e-9 and worst_lip >= -1e-9 and dt < 10.0
    criterion("2 (operator laws)", ok, f"{len(fams)} families x 1000 pairs, firm slack {worst_fne:.2e}, Lipschitz slack {worst_lip:.2e}, {dt:.2f}s")


def _swap_instances():
    for seed in range(20):
        rng = np.random.default_rng(300 + seed)
        n = int(rng.integers(2, 7))
        fams = list(_pair_families(rng, n).values())
        f, g = fams[seed % len(fams)]
        yield f, g, 3 * rng.standard_normal(n)


def test_criterion_3_primal_dual_symmetry(criterion):
    stop = StopRule(tol=0.0, max_iters=100, exact_zero=False)
    dev = u_dev = v_stated = 0.0
    for f, g, w0 in _swap_instances():
        r = dr_core.dual_swap_run(f, g, w0, stop)
        dev = max(dev, r.max_deviation)
        w_prev = r.primal.w0
        for p, d in zip(r.primal.states, r.dual.states):
            u_dev = max(u_dev, float(np.linalg.norm(d.x - (w_prev - p.x))))
            v_stated = max(v_stated, float(np.linalg.norm(d.y - (2 * p.y - p.x + w_prev))))
            w_prev = p.w
    criterion("3a (w~ = w)", dev <= 1e-10, f"20 instances x 100 iterations, max deviation {dev:.2e}")
    criterion("3b (u~ = w_k - x_{k+1})", u_dev <= 1e-10, f"max deviation {u_dev:.2e}")
    criterion("3c (v~ = 2y_{k+1} - x_{k+1} + w_k as stated)", v_stated <= 1e-10, f"max deviation {v_stated:.2e}")


def test_criterion_3_dual_iterate_identity(criterion):
    # the dual run's second prox output equals y_{k+1} - 2x_{k+1} + w_k
    stop = StopRule(tol=0.0, max_iters=100, exact_zero=False)
    v_dev = 0.0
    for f, g, w0 in _swap_instances():
        v_dev = max(v_dev, dr_core.dual_swap_run(f, g, w0, stop).v_deviation)
    criterion("3c' (v~ = y_{k+1} - 2x_{k+1} + w_k)", v_dev <= 1e-10, f"max deviation {v_dev:.2e}")


def _strong_convexity_instances(mu_sampler, seeds=range(10)):
    for seed in seeds:
        rng = np.random.default_rng(400 + seed)
        n = int(rng.integers(2, 51))
        mu, mu_star = mu_sampler(rng)
        p, q = rng.standard_normal(n), rng.standard_normal(n)
        f = pc.quadratic(mu * np.eye(n), -mu * p)
        g = pc.quadratic(mu_star * np.eye(n), -mu_star * q)
        yield n, mu, mu_star, f, g, 5 * rng.standard_normal(n)


def _check_rates(instances):
    worst_c, worst_h, rows = -np.inf, -np.inf, 0
    for n, mu, mu_star, f, g, w0 in instances:
        H = diagnostics.strong_convexity_H(mu, mu_star)
        w_bar = diagnostics.quadratic_pair_fixed_point(f, g)
        tr = dr_core.run(f, g, w0, StopRule(tol=1e-13, max_iters=20_000))
        rep = diagnostics.fit_rate(tr, window=max(2, min(50, len(tr) - 2)), dist=diagnostics.singleton_dist(w_bar), predicted_H=H)
        worst_c = max(worst_c, rep.max_contraction - (1 - 1 / H**2))
        worst_h = max(worst_h, rep.empirical_H / H)
        rows += 1
    return worst_c, worst_h, rows


def test_criterion_4_strong_convexity_rate(criterion):
    # mu log-uniform in [0.1, 10], mu* log-uniform in [0.1, 1]
    t0 = time.perf_counter()
    inst = _strong_convexity_instances(lambda r: (float(np.exp(r.uniform(np.log(0.1), np.log(10)))), float(np.exp(r.uniform(np.log(0.1), 0.0)))))
    worst_c, worst_h, rows = _check_rates(inst)
    dt = time.perf_counter() - t0
    ok = worst_c <= 1e-9 and worst_h <= 1.0 and dt < 30.0
    criterion("4 (strong-convexity rate, mu* <= 1)", ok, f"{rows} instances, max contraction excess {worst_c:.2e}, max empirical_H/H {worst_h:.3f}, {dt:.2f}s")


def test_criterion_4_literal_H_large_mu_star(criterion):
    # same family with mu = mu* in {10, 30, 100}: g_* is only 1/mu*-strongly convex
    t0 = time.perf_counter()
    grid = [10.0, 30.0, 100.0]
    inst = _strong_convexity_instances(lambda r: (grid[int(r.integers(3))],) * 2)
    worst_c, worst_h, rows = _check_rates(inst)
    dt = time.perf_counter() - t0
    ok = worst_c <= 1e-9 and worst_h <= 1.0
    criterion("4' (literal H with mu = mu* >= 10)", ok, f"{rows} instances, max contraction excess {worst_c:.2e}, max empirical_H/H {worst_h:.3f}, {dt:.2f}s")


def test_criterion_5_closed_form(criterion):
    feas = diagnostics.diag_qp_hoffman(DiagQPInstance([2.0, 0.5], [-1.0, -1.0], {0, 1}))
    infeas = diagnostics.diag_qp_hoffman(DiagQPInstance([2.0, 0.5], [-1.0, -1.0], set(), R=1.0))
    ok = feas == (3.0, True) and infeas == (3.0, False)
    criterion("5a (diag-QP closed form)", ok, f"feasible piece H = {feas[0]}, infeasible piece H = {infeas[0]}")


def test_criterion_5_bruteforce(criterion):
    t0 = time.perf_counter()
    cases = {
        "feasible d=(2,.5) c=(-1,-1) J={1,2}": DiagQPInstance([2.0, 0.5], [-1.0, -1.0], {0, 1}),
        "infeasible d=(2,.5) c=(-1,-1) J={} R=1": DiagQPInstance([2.0, 0.5], [-1.0, -1.0], set(), R=1.0),
        "n=1 d=1 c=-1 J={1}": DiagQPInstance([1.0], [-1.0], {0}),
    }
    parts, ok = [], True
    for name, inst in cases.items():
        exact, _ = diagnostics.diag_qp_hoffman(inst)
        brute = diagnostics.diag_qp_hoffman_bruteforce(inst, 100_000, seed=5)
        rel = abs(brute - exact) / exact
        ok &= rel <= 0.05
        parts.append(f"{name}: brute {brute:.4f} vs {exact:.4f} ({100 * rel:.1f}%)")
    dt = time.perf_counter() - t0
    criterion("5b (brute force within 5%)", ok and dt < 60.0, "; ".join(parts) + f"; {dt:.2f}s")


def test_criterion_6_support_identification(criterion):
    t0 = time.perf_counter()
    mismatches = unfrozen = trivial = total = 0
    max_iters = 0
    for n in range(2, 13):
        rng = np.random.default_rng(600 + n)
        for _ in range(100):
            B = conic.random_subspace(n, rng)
            ref = diagnostics.support_partition_oracle(B)
            is_trivial = len(ref.supp_L) == n or len(ref.supp_Lperp) == n
            got = conic.identify_supports(B, until_frozen=is_trivial)
            total += 1
            mismatches += not got.same_partition(ref)
            max_iters = max(max_iters, got.iterations)
            if is_trivial:
                trivial += 1
                unfrozen += got.frozen_at is None
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and unfrozen == 0 and dt < 120.0
    criterion(
        "6 (finite support identification)",
        ok,
        f"{total} subspaces, {mismatches} mismatches, {trivial} with a strictly positive point, {unfrozen} never froze, max {max_iters} iterations, {dt:.2f}s",
    )


def test_criterion_7_cone_operator(criterion):
    rng = np.random.default_rng(7)
    n = 5
    L = conic.subspace(rng.standard_normal((n, 2)))
    O = conic.orthant(n)
    cones = [L, O, conic.polar_of(L), conic.polar_of(O)]
    worst = 0.0
    pts = 3 * rng.standard_normal((1000, n))
    for i, w in enumerate(pts):
        C, K = cones[i % 4], cones[(i // 4) % 4]
        a = conic.cone_dr_operator(C, K, w).state.w
        b = dr_core.apply(conic.indicator(C), conic.indicator(K), w)
        worst = max(worst, float(np.max(np.abs(a - b))))
    Ls = L.subspace
    fL, fO, fP = pc.indicator_subspace(Ls), pc.indicator_orthant(n), pc.indicator_shifted_orthant(n)
    worst_max = max(float(np.max(np.abs(conic.subspace_orthant_step(Ls, w) - dr_core.apply(fL, fO, w)))) for w in pts)
    worst_aff = max(float(np.max(np.abs(conic.affine_step(Ls, w) - dr_core.apply(fL, fP, w)))) for w in pts)
    ok = max(worst, worst_max, worst_aff) <= 1e-12
    criterion("7 (cone operator identities)", ok, f"reflection form {worst:.2e}, max(x,u) {worst_max:.2e}, max(x,u+e1) {worst_aff:.2e}")


def _equivalence_instance(seed):
    rng = np.random.default_rng(800 + seed)
    n, m, k = (int(v) for v in rng.integers(1, 5, 3))
    kind = seed % 3
    if kind == 0:
        f = pc.quadratic(random_psd(rng, n) + 0.1 * np.eye(n), rng.standard_normal(n))
        g = pc.quadratic(random_psd(rng, m) + 0.1 * np.eye(m), rng.standard_normal(m))
    elif kind == 1:
        f = pc.indicator_affine(rng.standard_normal(n), rng.standard_normal((n, max(1, n - 1))))
        g = pc.quadratic(random_psd(rng, m) + 0.5 * np.eye(m), rng.standard_normal(m))
    else:
        f = pc.quadratic(random_psd(rng, n) + 0.5 * np.eye(n), rng.standard_normal(n))
        g = pc.indicator_subspace(rng.standard_normal((m, max(1, m - 1))))
    prob = ConstrainedProblem(f, g, rng.standard_normal((k, n)), rng.standard_normal((k, m)), rng.standard_normal(k))
    return prob, rng.standard_normal(n), rng.standard_normal(k)


def test_criterion_8_admm_equivalence(criterion):
    t0 = time.perf_counter()
    worst = max(constrained.equivalence_run(*_equivalence_instance(s), 100) for s in range(10))
    dt = time.perf_counter() - t0
    criterion("8 (splitting/ADMM equivalence)", worst <= 1e-9 and dt < 30.0, f"10 instances x 100 iterations, max deviation {worst:.2e}, {dt:.2f}s")


def test_criterion_9_composition_constants(criterion):
    rng = np.random.default_rng(9)
    worst = 0.0
    for i in range(20):
        k, n = (int(v) for v in rng.integers(1, 7, 2))
        r = int(rng.integers(1, min(k, n) + 1))
        A = rng.standard_normal((k, r)) @ rng.standard_normal((r, n))
        mu, L = float(rng.uniform(0.1, 5)), float(rng.uniform(0.1, 5))
        ev = np.linalg.eigvalsh(A.T @ A)  # squared singular values by another route
        pos = ev[ev > 1e-9 * ev[-1]]
        worst = max(
            worst,
            abs(constrained.relative_sc_constant(mu, A) - mu * pos[0]) / (mu * pos[0]),
            abs(constrained.smoothness_composed(L, A) - L * ev[-1]) / (L * ev[-1]),
        )
    slack = min(
        constrained.relative_sc_slack(float(rng.uniform(0.1, 5)), rng.standard_normal((int(rng.integers(1, 4)), int(rng.integers(1, 7)))), rng, samples=100)
        for _ in range(10)
    )
    ok = worst <= 1e-10 and slack >= -1e-8
    criterion("9 (composition constants)", ok, f"20 matrices, max rel. error {worst:.2e}; relative strong convexity min slack {slack:.2e}")


def test_criterion_10_abc_inequality(criterion):
    rng = np.random.default_rng(10)
    tuples, drawn = diagnostics.sample_lemma_abc(rng, 10_000)
    results = [diagnostics.lemma_abc_check(*t) for t in tuples]
    tight = min(4 * (1 + 1 / diagnostics._mu_of(t[3])) * np.linalg.norm(t[1]) - np.linalg.norm(t[0] + t[1]) for t in tuples)
    ok = len(results) == 10_000 and all(r is True for r in results)
    criterion("10 (a, b, c inequality)", ok, f"{len(results)} admissible tuples from {drawn} draws, all hold: {ok}, min margin {tight:.3e}")
