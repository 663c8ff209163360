import numpy as np
import pytest

from drsplit import conic, dr_core
from drsplit import prox_catalog as pc
from drsplit.diagnostics import support_partition_oracle
from drsplit.dr_core import EXACT_FIXED_POINT, StopRule
from drsplit.errors import AmbiguousSupportError, ConstructionError, DimensionError


def _cones(rng, n):
    L = conic.subspace(rng.standard_normal((n, max(1, n // 2))))
    O = conic.orthant(n)
    return [L, O, conic.polar_of(L), conic.polar_of(O), conic.dual_of(O), conic.dual_of(L), conic.polar_of(conic.polar_of(O))]


def test_projection_examples():
    np.testing.assert_array_equal(conic.project(conic.orthant(3), [1.0, -2.0, 0.0]), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(conic.project(conic.polar_of(conic.orthant(3)), [1.0, -2.0, 0.0]), [0.0, -2.0, 0.0])
    np.testing.assert_allclose(conic.project(conic.subspace([[1.0], [1.0]]), [1.0, 0.0]), [0.5, 0.5], atol=1e-15)


def test_moreau_cone_decomposition(rng):
    n = 5
    for C in _cones(rng, n):
        P = conic.polar_of(C)
        for z in 3 * rng.standard_normal((200, n)):
            a, b = C.decompose(z)
            np.testing.assert_allclose(a + b, z, atol=1e-10)
            assert abs(a @ b) <= 1e-10
            assert C.contains(a, 1e-10) and P.contains(b, 1e-10)
            np.testing.assert_allclose(C.project(a), a, atol=1e-10)


def test_shifted_orthant_has_no_polar():
    P = conic.shifted_orthant(3)
    assert not P.is_cone
    with pytest.raises(ConstructionError):
        P.project_polar(np.ones(3))


def test_cone_operator_examples(rng):
    n = 4
    O = conic.orthant(n)
    for _ in range(20):
        w = rng.standard_normal(n)
        np.testing.assert_allclose(conic.cone_dr_operator(O, O, w).state.w, np.maximum(w, 0), atol=1e-15)
    L = conic.subspace(rng.standard_normal((n, 2)))
    for _ in range(20):
        w = rng.standard_normal(n)
        got = conic.cone_dr_operator(L, O, w).state.w
        np.testing.assert_allclose(got, np.maximum(L.project(w), L.project_polar(w)), atol=1e-12)
    w = O.project(L.project(np.ones(n)))  # not necessarily in L; use an explicit intersection point
    w = np.array([1.0, 2.0, 0.0, 3.0])
    Lw = conic.subspace(w[:, None])
    np.testing.assert_allclose(conic.cone_dr_operator(Lw, O, w).state.w, w, atol=1e-15)


def test_cone_operator_matches_generic(rng):
    n = 5
    cones = _cones(rng, n)
    for C in cones:
        for K in cones:
            for w in rng.standard_normal((10, n)):
                a = conic.cone_dr_operator(C, K, w).state.w
                b = dr_core.apply(conic.indicator(C), conic.indicator(K), w)
                np.testing.assert_allclose(a, b, atol=1e-12)


def test_cone_dimension_mismatch():
    with pytest.raises(DimensionError):
        conic.cone_dr_operator(conic.orthant(2), conic.orthant(3), [1.0, 1.0])


def test_affine_step_closed_form(rng):
    L = conic.as_subspace(rng.standard_normal((4, 2)))
    f = pc.indicator_subspace(L)
    g = pc.indicator_shifted_orthant(4)
    for w in 2 * rng.standard_normal((50, 4)):
        np.testing.assert_allclose(conic.affine_step(L, w), dr_core.apply(f, g, w), atol=1e-12)


def test_affine_examples():
    L = conic.homogenize([2.0])
    np.testing.assert_allclose(L, [[1.0], [2.0]])
    Ls = conic.as_subspace(L)
    np.testing.assert_allclose(conic.affine_step(Ls, [1.0, 2.0]), [1.0, 2.0], atol=1e-15)
    full = conic.as_subspace(np.eye(2))
    w = np.array([0.3, -1.0])
    np.testing.assert_allclose(conic.affine_step(full, w), [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(conic.homogenize([0.5, -1.0]), [[1.0], [0.5], [-1.0]])
    np.testing.assert_allclose(conic.homogenize([0.0], [[1.0]]), [[1.0, 0.0], [0.0, 1.0]])


def test_affine_run_fixed_start():
    L = conic.as_subspace(conic.homogenize([2.0]))
    tr = dr_core.run(pc.indicator_subspace(L), pc.indicator_shifted_orthant(2), [1.0, 2.0], StopRule(tol=1e-12))
    assert tr.stop_reason == EXACT_FIXED_POINT and len(tr) == 1


def test_membership_examples():
    L = conic.subspace([[1.0], [0.0]])
    O = conic.orthant(2)
    assert conic.fixed_point_membership(L, O, [1.0, 1.0])
    assert not conic.fixed_point_membership(L, O, [-1.0, 0.0])
    assert conic.fixed_point_membership(conic.polar_of(L), conic.dual_of(O), [0.0, 0.0])


def test_supports_examples():
    p = conic.identify_supports([[1.0], [0.0]])
    assert (p.supp_L, p.supp_Lperp, p.identified_at) == ((0,), (1,), 1)
    assert p.to_dict()["supp_L"] == [1]
    p = conic.identify_supports([[1.0], [-1.0], [0.0]])
    assert p.supp_L == () and p.supp_Lperp == (0, 1, 2)
    p = conic.identify_supports(np.array([[1.0, 1.0], [1.0, 0.0], [1.0, -1.0]]), until_frozen=True)
    assert p.supp_L == (0, 1, 2) and p.frozen_at is not None


def test_supports_degenerate():
    p = conic.identify_supports(np.zeros((3, 0)))
    assert p.supp_L == () and p.supp_Lperp == (0, 1, 2)
    p = conic.identify_supports(np.eye(3))
    assert p.supp_L == (0, 1, 2) and p.supp_Lperp == ()


def test_supports_bad_start():
    with pytest.raises(ValueError):
        conic.identify_supports([[1.0], [0.0]], w0=[1.0, 0.0])


def test_supports_budget_exhausted_is_ambiguous():
    L = conic.random_subspace(6, np.random.default_rng(0), structured=True)
    with pytest.raises(AmbiguousSupportError) as exc:
        conic.identify_supports(L, stop=StopRule(max_iters=2))
    assert exc.value.ambiguous


@pytest.mark.parametrize("n", [3, 6, 9])
def test_supports_match_oracle(rng, n):
    for _ in range(15):
        B = conic.random_subspace(n, rng)
        p = conic.identify_supports(B)
        assert p.same_partition(support_partition_oracle(B))
        x, u = p.certificate
        L = conic.as_subspace(B)
        assert abs(x @ u) <= 1e-12
        assert np.all(x >= 0) and np.all(u >= 0)
        assert set(np.flatnonzero(x > 0)) <= set(p.supp_L)
        assert set(np.flatnonzero(u > 0)) <= set(p.supp_Lperp)
        assert L.contains(x, 1e-9) and np.linalg.norm(L.project(u)) <= 1e-9 * max(1, np.linalg.norm(u))
        assert set(p.supp_L) | set(p.supp_Lperp) == set(range(n))


def test_nonzero_limit():
    tr, info = conic.nonzero_limit_run(conic.subspace([[1.0], [0.0]]), conic.orthant(2))
    np.testing.assert_array_equal(info["limit"], [1.0, 1.0])
    assert info["C_part_nonzero"] and info["Cpolar_part_nonzero"]


def test_nonzero_limit_needs_orthant():
    with pytest.raises(ConstructionError):
        conic.nonzero_limit_run(conic.orthant(2), conic.subspace(np.eye(2)))


def test_cone_dict_round_trip(rng):
    for C in _cones(rng, 3):
        D = conic.cone_from_dict(C.to_dict())
        z = rng.standard_normal(3)
        np.testing.assert_allclose(D.project(z), C.project(z), atol=1e-12)
