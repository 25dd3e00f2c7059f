import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lz_setkit import (
    DimensionError,
    EmptySetError,
    LineZonotope,
    Strip,
    cartesian_product,
    generalized_intersection,
    interval_hull,
    is_empty,
    linear_map,
    lz_box,
    lz_from_strip,
    lz_realspace,
    lz_singleton,
    lz_zonotope,
    membership,
    minkowski_sum,
    multi_intersection,
    point_kappa,
    radius,
    support,
)
from lz_setkit.sets import Interval, lz_constrained_zonotope
from oracles import hpoly_vertices, lz_membership_scipy, lz_support_scipy

Z_BRAVO = np.array([[0.2812, 0.1968, 0.4235], [0.0186, -0.2063, -0.2267]])


def random_cz(rng, n, ng, nc):
    """Random nonempty constrained zonotope: constraints built around an interior factor."""
    G = rng.normal(size=(n, ng))
    A = rng.normal(size=(nc, ng))
    xi0 = rng.uniform(-0.5, 0.5, ng)
    return lz_constrained_zonotope(G, rng.normal(size=n), A, A @ xi0)


# -- constructors -------------------------------------------------------------

def test_zonotope_estimation_initial_set():
    Z = lz_zonotope(np.diag([0.1, 1.5, 0.6]), [0.5, 0.5, 0.25])
    assert Z.is_zonotope and Z.n == 3 and Z.n_gens == 3
    h = interval_hull(Z)
    np.testing.assert_allclose(h.lower, [0.4, -1.0, -0.35])
    np.testing.assert_allclose(h.upper, [0.6, 2.0, 0.85])


def test_zonotope_singleton_and_box():
    Z = lz_zonotope(np.zeros((2, 0)), [0, 0])
    assert membership([0, 0], Z)
    assert not membership([1e-3, 0], Z)
    assert membership([0.9, -0.9], lz_zonotope(np.eye(2), [0, 0]))


def test_zonotope_dimension_mismatch():
    with pytest.raises(DimensionError):
        lz_zonotope(np.eye(3), [0, 0])


def test_realspace():
    R = lz_realspace(3)
    np.testing.assert_array_equal(R.M, np.eye(3))
    assert R.n_gens == 0 and np.all(R.c == 0)
    R1 = lz_realspace(1)
    assert R1.M.shape == (1, 1) and R1.M[0, 0] == 1
    rng = np.random.default_rng(0)
    for x in rng.normal(scale=100, size=(20, 3)):
        assert membership(x, R)
    with pytest.raises(ValueError):
        lz_realspace(0)


def test_strip_rep_matches_construction():
    Z = lz_from_strip(Strip([-1, 1], 1, 0.5))
    np.testing.assert_array_equal(Z.M, np.eye(2))
    np.testing.assert_array_equal(Z.G, np.zeros((2, 1)))
    np.testing.assert_array_equal(Z.S, [[-1, 1]])
    np.testing.assert_array_equal(Z.A, [[-0.5]])
    np.testing.assert_array_equal(Z.b, [1])


def test_hyperplane_strip():
    s = Strip([1, 2], 3, 0.0)
    Z = lz_from_strip(s)
    assert Z.G.shape == (2, 1) and Z.A[0, 0] == 0
    assert membership([1, 1], Z)
    assert not membership([1, 1.01], Z)


def test_strip_sample_membership():
    s = Strip([1, -1, 1], 1, 0.1)
    Z = lz_from_strip(s)
    rng = np.random.default_rng(1)
    for x in rng.uniform(-3, 3, size=(200, 3)):
        assert membership(x, Z) == s.contains(x, 1e-9) or abs(abs(s.rho @ x - 1) - 0.1) < 1e-7


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        Strip([1, 0], 0, -0.1)


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        lz_zonotope([[np.inf]], [0])


def test_interval_invariants():
    with pytest.raises(ValueError):
        Interval([1.0], [0.0])
    assert not Interval([-np.inf], [0]).bounded


# -- linear map, sum, product ------------------------------------------------

def test_linear_map_identity_and_zero():
    rng = np.random.default_rng(2)
    Z = random_cz(rng, 3, 5, 2)
    assert linear_map(np.eye(3), Z).structurally_equal(Z)
    Y = linear_map(np.zeros((1, 3)), Z)
    np.testing.assert_array_equal(Y.b, Z.b)
    assert membership([0.0], Y) and not membership([0.1], Y)


def test_linear_map_reflection():
    R = np.array([[1, 0], [0, -1.0]])
    box = lz_box([-1, -1], [1, 1])
    Y = linear_map(R, box)
    rng = np.random.default_rng(3)
    for x in rng.uniform(-1.5, 1.5, size=(300, 2)):
        inside = bool(np.all(np.abs(x) <= 1))
        assert membership(x, Y) == inside
        assert membership(R @ x, Y) == membership(x, box)


def test_minkowski_singleton_and_intervals():
    Z = lz_zonotope([[1.0, 0.5]], [0.0])
    T = minkowski_sum(Z, lz_singleton([2.0]))
    h = interval_hull(T)
    np.testing.assert_allclose([h.lower[0], h.upper[0]], [0.5, 3.5])
    u = lz_box([-1], [1])
    h2 = interval_hull(minkowski_sum(u, u))
    np.testing.assert_allclose([h2.lower[0], h2.upper[0]], [-2, 2])
    with pytest.raises(DimensionError):
        minkowski_sum(u, lz_box([0, 0], [1, 1]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_minkowski_support_additive(seed):
    rng = np.random.default_rng(seed)
    Z = random_cz(rng, 2, 4, 1)
    W = random_cz(rng, 2, 3, 1)
    S = minkowski_sum(Z, W)
    for th in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        d = np.array([np.cos(th), np.sin(th)])
        assert support(S, d) == pytest.approx(support(Z, d) + support(W, d), abs=1e-7)


def test_cartesian_product():
    Z = lz_box([-1], [1])
    P = cartesian_product(Z, Z)
    h = interval_hull(P)
    np.testing.assert_allclose(h.lower, [-1, -1])
    np.testing.assert_allclose(h.upper, [1, 1])
    Q = cartesian_product(Z, lz_singleton([0.0]))
    assert Q.n == 2 and membership([0.5, 0], Q) and not membership([0.5, 0.1], Q)


def test_cartesian_initial_and_noise_dimensions():
    X0 = lz_realspace(3)
    W = lz_box(-np.ones(3), np.ones(3))
    P = cartesian_product(X0, W)
    assert P.n == 6 and P.n_lines == 3 and P.n_gens == 3


# -- intersections ------------------------------------------------------------

def test_zonotope_strip_intersection_rep():
    Z = lz_zonotope(Z_BRAVO, [0, 0])
    S = lz_from_strip(Strip([1, -1], 1, 0.1))
    I = generalized_intersection(Z, S)
    np.testing.assert_array_equal(I.M, np.zeros((2, 2)))
    np.testing.assert_array_equal(I.G, np.hstack([Z_BRAVO, np.zeros((2, 1))]))
    np.testing.assert_array_equal(I.S, [[1, -1], [-1, 0], [0, -1]])
    np.testing.assert_array_equal(I.A, np.vstack([[0, 0, 0, -0.1], np.hstack([Z_BRAVO, np.zeros((2, 1))])]))
    np.testing.assert_array_equal(I.b, [1, 0, 0])


def test_zonotope_strip_intersection_exact():
    Z = lz_zonotope(Z_BRAVO, [0, 0])
    s = Strip([1, -1], 1, 0.1)
    I = generalized_intersection(Z, lz_from_strip(s))
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1.2, 1.2, size=(400, 2))
    for x in pts:
        expect = lz_membership_scipy(x, Z) and s.contains(x)
        if abs(abs(s.rho @ x - s.d) - s.sigma) < 1e-6:
            continue
        assert membership(x, I) == expect


def test_intersection_with_realspace_is_identity():
    rng = np.random.default_rng(5)
    Z = random_cz(rng, 2, 4, 1)
    I = generalized_intersection(Z, lz_realspace(2))
    for x in rng.uniform(-4, 4, size=(100, 2)):
        assert membership(x, I) == lz_membership_scipy(x, Z)


def _strip_pair():
    return Strip([1, -1, 1], 1, 0.1), Strip([1, 1, 1], 1, 0.1)


def test_strip_strip_intersection():
    s1, s2 = _strip_pair()
    I = generalized_intersection(lz_from_strip(s1), lz_from_strip(s2))
    assert not interval_hull(I).bounded
    # the line x2 = 0, x1 + x3 = 1 lies in both strips
    for t in np.linspace(-50, 50, 101):
        assert membership([t, 0, 1 - t], I)
    rng = np.random.default_rng(6)
    for _ in range(100):
        x = np.array([rng.normal() * 10, 0, 0])
        x[2] = 1 - x[0]
        assert not membership(x + np.array([0, 0.2, 0]), I)
        assert not membership(x + np.array([0.2, 0, 0.2]), I)


def test_dimension_mismatch_in_intersection():
    with pytest.raises(DimensionError):
        generalized_intersection(lz_box([0, 0], [1, 1]), lz_box([0], [1]), np.eye(2))


def test_multi_intersection_single_set():
    box = lz_box([-1, -1], [1, 1])
    P = multi_intersection([box], [np.eye(2)])
    rng = np.random.default_rng(7)
    for x in rng.uniform(-1.5, 1.5, size=(200, 2)):
        assert membership(x, P) == membership(x, box)


def test_multi_intersection_matches_chain():
    s1, s2 = _strip_pair()
    Zs = [lz_from_strip(s1), lz_from_strip(s2)]
    P = multi_intersection(Zs, [np.eye(3), np.eye(3)])
    C = generalized_intersection(Zs[0], Zs[1])
    rng = np.random.default_rng(8)
    for x in rng.uniform(-2, 2, size=(300, 3)):
        assert membership(x, P) == membership(x, C)


def test_multi_intersection_errors():
    with pytest.raises(ValueError):
        multi_intersection([], [])
    with pytest.raises(DimensionError):
        multi_intersection([lz_box([0], [1])], [np.eye(2)])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_three_strips_hull_vs_vertices(seed):
    rng = np.random.default_rng(seed)
    rho = rng.normal(size=(3, 3))
    d = rng.normal(size=3)
    sig = rng.uniform(0.1, 1.0, 3)
    strips = [Strip(rho[i], d[i], sig[i]) for i in range(3)]
    P = multi_intersection([lz_from_strip(s) for s in strips], [np.eye(3)] * 3)
    h = interval_hull(P)
    if abs(np.linalg.det(rho)) < 1e-3:
        return
    assert h.bounded
    H = np.vstack([rho, -rho])
    hv = np.concatenate([d + sig, sig - d])
    V = hpoly_vertices(H, hv)
    np.testing.assert_allclose(h.lower, V.min(axis=0), atol=1e-6)
    np.testing.assert_allclose(h.upper, V.max(axis=0), atol=1e-6)


def test_two_strips_in_3d_unbounded():
    rng = np.random.default_rng(9)
    Zs = [lz_from_strip(Strip(rng.normal(size=3), 0.0, 1.0)) for _ in range(2)]
    assert not interval_hull(multi_intersection(Zs, [np.eye(3)] * 2)).bounded


# -- membership and emptiness -------------------------------------------------

def test_membership_center_and_outside():
    Z = lz_zonotope(np.eye(2), [0.3, -0.2])
    assert membership([0.3, -0.2], Z)
    assert not membership([2, 0], lz_box([-1, -1], [1, 1]))


def test_point_kappa_values():
    box = lz_box([-1, -1], [1, 1])
    assert point_kappa([0, 0], box) == pytest.approx(-1)
    assert point_kappa([2, 0], box) == pytest.approx(1)
    hyper = lz_from_strip(Strip([1, 0], 0, 0.0))
    assert point_kappa([1, 0], hyper) == np.inf


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_membership_matches_independent_lp(seed):
    rng = np.random.default_rng(seed)
    Z = random_cz(rng, 2, 4, 1)
    if rng.uniform() < 0.5:
        Z = minkowski_sum(Z, lz_from_strip(Strip(rng.normal(size=2), 0.0, 0.3)))
    for x in rng.normal(scale=2, size=(10, 2)):
        k = point_kappa(x, Z)
        if np.isfinite(k) and abs(k) < 1e-6:
            continue
        assert membership(x, Z) == lz_membership_scipy(x, Z)


def test_membership_simplex_agrees_with_highs():
    rng = np.random.default_rng(10)
    Z = random_cz(rng, 2, 5, 2)
    for x in rng.normal(size=(15, 2)):
        a = point_kappa(x, Z)
        b = point_kappa(x, Z, method="simplex")
        assert a == pytest.approx(b, abs=1e-7) or (np.isinf(a) and np.isinf(b))


def test_is_empty():
    assert not is_empty(lz_zonotope(np.eye(2), [0, 0]))
    assert is_empty(lz_constrained_zonotope([[1.0]], [0], [[1.0]], [3.0]))
    assert not is_empty(lz_constrained_zonotope([[1.0]], [0], [[1.0]], [0.5]))


def test_dimension_mismatch_in_membership():
    with pytest.raises(DimensionError):
        membership([0, 0, 0], lz_box([0, 0], [1, 1]))


# -- hulls and radius ---------------------------------------------------------

def test_hull_box_and_realspace():
    h = interval_hull(lz_box(-np.ones(3), np.ones(3)))
    np.testing.assert_allclose(h.lower, -1)
    np.testing.assert_allclose(h.upper, 1)
    hr = interval_hull(lz_realspace(2))
    assert np.all(np.isinf(hr.lower)) and np.all(np.isinf(hr.upper))


def test_radius():
    assert radius(lz_box(-np.ones(2), np.ones(2))) == pytest.approx(1)
    assert radius(lz_realspace(2)) == np.inf
    box = lz_box(-np.ones(2), np.ones(2))
    slab = generalized_intersection(box, lz_from_strip(Strip([1, 1], 0.5, 0.0)))
    r = radius(slab)
    h = interval_hull(slab)
    np.testing.assert_allclose(h.lower, [-0.5, -0.5], atol=1e-8)
    np.testing.assert_allclose(h.upper, [1, 1], atol=1e-8)
    assert r == pytest.approx(0.75) and r <= 1


def test_hull_of_empty_set_raises():
    E = lz_constrained_zonotope([[1.0]], [0], [[1.0]], [3.0])
    with pytest.raises(EmptySetError):
        interval_hull(E)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_support_matches_independent_lp(seed):
    rng = np.random.default_rng(seed)
    Z = random_cz(rng, 3, 5, 2)
    for d in rng.normal(size=(5, 3)):
        assert support(Z, d) == pytest.approx(lz_support_scipy(Z, d), abs=1e-7)


def test_structure_counts():
    Z = LineZonotope(np.eye(2), np.ones((2, 1)), [0, 0], np.zeros((1, 2)), [[1.0]], [0.0])
    assert (Z.n, Z.n_lines, Z.n_gens, Z.n_cons) == (2, 2, 1, 1)
    assert not Z.is_constrained_zonotope
