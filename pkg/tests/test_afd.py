import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lz_setkit import (
    DescriptorModel,
    DimensionError,
    FaultModelSet,
    InfeasibleDesignError,
    LineZonotope,
    ReductionLimits,
    check_separation,
    design_input,
    lz_realspace,
    lz_zonotope,
    membership,
    pairwise_kappa,
    verify_diagnosis,
)
from lz_setkit.afd import (
    SeparationProblem,
    bound_kappa_max,
    build_output_tube,
    build_separation_problem,
    build_state_tube,
    input_dependent_reduce,
    limits_for,
    merge_parallel,
    output_tubes,
    prepare_pair,
    reduced_kappa,
    sample_outputs,
    transform_fault_models,
    tube_by_recursion,
    tube_hulls,
    zonotope_equivalent,
)
from lz_setkit.estimator import solve_static, zonotope_box
from afd_fixtures import E3, U0, U_SEPARATING, four_model_set, scalar_model, scalar_set


def assert_affine_equal(a, b, atol=1e-10):
    for name in ("M", "G", "c0", "Hc", "S", "A", "b0", "Hb"):
        x, y = getattr(a, name), getattr(b, name)
        assert x.shape == y.shape, name
        np.testing.assert_allclose(x, y, atol=atol, err_msg=name)


def random_descriptor(rng, static=True):
    E = E3 if static else np.eye(3)
    A = rng.normal(scale=0.6, size=(3, 3))
    if static:
        A[2, 2] = 1.0 + abs(A[2, 2])
    return DescriptorModel(E, A, rng.normal(size=(3, 2)), 0.3 * rng.normal(size=(3, 3)),
                           rng.normal(size=(1, 3)), rng.normal(size=(1, 2)), [[0.5]])


def random_fault_set(rng, n_models=2, N=2, static=True, bounded_x0=True):
    models = [random_descriptor(rng, static) for _ in range(n_models)]
    X0 = lz_zonotope(np.diag(rng.uniform(0.1, 1, 3)), rng.normal(size=3)) if bounded_x0 else lz_realspace(3)
    return FaultModelSet(models, X0, zonotope_box([0.1] * 3), zonotope_box([0.1]), zonotope_box([2.0, 2.0]),
                         [0.5, -0.5], N, 0.1, u_ref=[0.5, -0.5])


# -- model set and transform --------------------------------------------------

def test_fault_model_set_validation():
    with pytest.raises(DimensionError):
        scalar_set(X0=lz_realspace(2))
    with pytest.raises(ValueError):
        scalar_set(N=-1)
    with pytest.raises(ValueError):
        FaultModelSet([scalar_model(1.0)], lz_realspace(1), zonotope_box([0.1]), zonotope_box([0.1]),
                      lz_realspace(1), [0.0], 2, 0.1)
    f = scalar_set()
    assert f.n_models == 3 and f.pairs == [(0, 1), (0, 2), (1, 2)]
    assert f.u_ref.shape == (4,) and f.R.shape == (4,)


def test_limits_sized_to_input_sequence():
    f = four_model_set(with_limits=False)
    assert limits_for(f, 1.6, 2) == ReductionLimits(12, 2)


def test_transform_scalar_dimensions():
    tm = transform_fault_models(scalar_set())[0]
    assert tm.n_z == 1 and tm.n_aug == 2 and tm.Az_check.shape == (0, 2)
    np.testing.assert_allclose(tm.F, [[1.0, 0.0]])


def test_transform_static_row_in_initial_set():
    f = four_model_set()
    tm = transform_fault_models(f)[0]
    assert tm.n_z == 2 and tm.n_aug == 6 and tm.Az_check.shape == (1, 6)
    Z0 = tm.initial_set(U0)
    assert Z0.n_cons == tm.Z_sigma.n_cons + 1
    expect = -tm.Az_check @ tm.Z_sigma.c - tm.B_check @ U0
    assert Z0.b[-1] == pytest.approx(expect[0])


def test_transform_admissible_needs_set():
    with pytest.raises(ValueError):
        transform_fault_models(scalar_set(), admissible=True)


# -- tubes --------------------------------------------------------------------

@pytest.mark.parametrize("N", [0, 1, 3])
def test_closed_form_matches_recursion_examples(N):
    for f in (scalar_set(N=N), four_model_set(N=N)):
        for tm in transform_fault_models(f):
            assert_affine_equal(build_state_tube(tm, N).affine, tube_by_recursion(tm, N))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 4), st.booleans())
def test_closed_form_matches_recursion_random(seed, N, static):
    rng = np.random.default_rng(seed)
    f = random_fault_set(rng, n_models=1, N=N, static=static)
    f = FaultModelSet(**{**f.__dict__, "X_A": zonotope_box([3.0, 3.0, 3.0])})
    for admissible in (False, True):
        tm = transform_fault_models(f, admissible)[0]
        assert_affine_equal(build_state_tube(tm, N).affine, tube_by_recursion(tm, N), atol=1e-9)


def test_tube_zero_horizon():
    f = four_model_set(N=0)
    tube = build_state_tube(transform_fault_models(f)[2], 0)
    np.testing.assert_allclose(tube.H, 0)
    assert np.any(tube.Omega)  # this model's static row sees u0


def test_tube_input_block_scalar():
    tube = build_state_tube(transform_fault_models(scalar_set(N=1))[1], 1)
    # z_1 = a z_0 + u_0 + w_0, with the disturbance coordinate independent of u
    np.testing.assert_allclose(tube.H, [[0, 0], [0, 0], [1, 0], [0, 0]])


def test_tube_affine_in_input():
    f = four_model_set()
    tm = transform_fault_models(f)[2]
    tube = build_state_tube(tm, f.N)
    rng = np.random.default_rng(0)
    u1, u2 = rng.normal(size=8), rng.normal(size=8)
    a, b, ab = tube.at(u1), tube.at(u2), tube.at(0.3 * u1 + 0.7 * u2)
    np.testing.assert_allclose(ab.c, 0.3 * a.c + 0.7 * b.c, atol=1e-12)
    np.testing.assert_allclose(ab.b, 0.3 * a.b + 0.7 * b.b, atol=1e-12)


def test_tube_contains_simulated_states():
    f = four_model_set()
    rng = np.random.default_rng(1)
    K = f.N + 1
    for tm in transform_fault_models(f):
        t = tm.t
        tube = build_state_tube(tm, f.N)
        hits = 0
        while hits < 30:
            u = rng.uniform(-8, 8, size=(K, 2))
            w = rng.uniform(-0.1, 0.1, size=(K, 3))
            x0 = f.X0.c + f.X0.G @ rng.uniform(-1, 1, 3)
            z = t.T_inv @ x0
            z = np.concatenate([z[:t.n_z], solve_static(t, z[:t.n_z], u[0], w[0])])
            if not membership(t.T @ z, f.X0, tol=1e-9):
                continue
            stack = [np.concatenate([z, w[0]])]
            for k in range(1, K):
                zt = t.A_tilde @ z + t.B_tilde @ u[k - 1] + t.Bw_tilde @ w[k - 1]
                z = np.concatenate([zt, solve_static(t, zt, u[k], w[k])])
                stack.append(np.concatenate([z, w[k]]))
            assert membership(np.concatenate(stack), tube.at(u.ravel()), tol=1e-7)
            hits += 1


def test_output_tube_center_affinity():
    f = four_model_set()
    tm = transform_fault_models(f)[3]
    Y = build_output_tube(tm, build_state_tube(tm, f.N), f.V)
    st_ = build_state_tube(tm, f.N)
    np.testing.assert_allclose(Y.set.Hc, Y.F_bar @ st_.H + Y.D_bar, atol=1e-12)


def test_output_tube_noise_free_measurement():
    m = DescriptorModel([[1.0]], [[0.5]], [[1.0]], [[1.0]], [[1.0]], [[0.0]], [[1.0]])
    point = lz_zonotope(np.zeros((1, 0)), [0.0])
    f = FaultModelSet([m], lz_zonotope(np.zeros((1, 0)), [2.0]), point, point, zonotope_box([1.0]), [0.0], 2, 0.1)
    y = output_tubes(f)[0].at([1.0, 0.0, 0.0])
    # y = (2, 0.5 * 2 + 1, 0.5 * 2) as a single point
    assert membership([2.0, 2.0, 1.0], y, tol=1e-9)
    assert not membership([2.0, 2.0, 1.1], y, tol=1e-9)


# -- separation ---------------------------------------------------------------

def test_same_pair_rejected():
    tubes = output_tubes(scalar_set())
    with pytest.raises(ValueError):
        build_separation_problem(tubes, (1, 1))


def test_duplicate_models_never_separate():
    f = scalar_set(models=(0.2, 0.2))
    sp = build_separation_problem(output_tubes(f), (0, 1))
    assert check_separation(sp, np.zeros(4)) == pytest.approx(-1.0)
    assert check_separation(sp, [0, 2, -2, 2]) == pytest.approx(-1.0)
    sp = prepare_pair(sp, f.U_bar(), None)
    assert sp.kappa_max == pytest.approx(-1.0)
    with pytest.raises(InfeasibleDesignError):
        design_input(f)


def test_scalar_separation_levels():
    f = scalar_set()
    tubes = output_tubes(f)
    sp = build_separation_problem(tubes, (0, 1))
    assert check_separation(sp, [0, 0.99, 0, 0]) > 0
    assert check_separation(sp, [0, 0, 0, 0]) < 0


def test_four_model_reference_and_separating_inputs():
    f = four_model_set()
    k_ref = pairwise_kappa(f, np.tile(U0, 4))
    k_pub = pairwise_kappa(f, U_SEPARATING)
    assert all(v < 0 for v in k_ref.values())
    assert all(v > 0 for v in k_pub.values())


def test_loose_reduction_is_exact():
    f = four_model_set()
    tubes = output_tubes(f)
    U_bar = f.U_bar()
    rng = np.random.default_rng(2)
    for q in [(0, 1), (2, 3)]:
        sp = input_dependent_reduce(build_separation_problem(tubes, q), U_bar, None)
        for _ in range(5):
            xi = rng.uniform(-1, 1, U_bar.n_gens)
            u = U_bar.c + U_bar.G @ xi
            assert reduced_kappa(sp, xi) == pytest.approx(check_separation(sp, u), abs=1e-7)


def test_reduction_is_sound():
    f = four_model_set()
    tubes = output_tubes(f)
    U_bar = f.U_bar()
    rng = np.random.default_rng(3)
    for q in f.pairs:
        sp = prepare_pair(build_separation_problem(tubes, q), U_bar, ReductionLimits(6, 1))
        assert sp.reduced.n_gens - sp.n_u_gens <= 6
        for _ in range(10):
            xi = rng.uniform(-1, 1, U_bar.n_gens)
            xi[:2] = 0.0
            if reduced_kappa(sp, xi) > 0:
                assert check_separation(sp, U_bar.c + U_bar.G @ xi) > 0
            assert reduced_kappa(sp, xi) <= check_separation(sp, U_bar.c + U_bar.G @ xi) + 1e-7


def _synthetic_reduced(rng, n, nd, ng, nc, nu):
    Z = LineZonotope(rng.normal(size=(n, nd)), rng.normal(size=(n, ng + nu)), rng.normal(size=n),
                     np.zeros((nc, nd)), rng.normal(size=(nc, ng + nu)), rng.normal(size=nc))
    return SeparationProblem(pair=(0, 1), N=np.zeros((n, 0)), Omega=np.zeros((nc, 0)), Y=Z,
                             reduced=Z, n_u_gens=nu)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ring_form_is_exact(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    nd = int(rng.integers(0, n))
    sp = zonotope_equivalent(_synthetic_reduced(rng, n, nd, int(rng.integers(3, 7)), int(rng.integers(0, 3)), 2))
    for _ in range(3):
        xi = rng.uniform(-1, 1, 2)
        a, b = sp.ring.kappa(xi), reduced_kappa(sp, xi)
        if np.isinf(a) or np.isinf(b):
            assert a == b
        else:
            assert a == pytest.approx(b, abs=1e-7)


def test_ring_form_without_lines():
    sp = zonotope_equivalent(_synthetic_reduced(np.random.default_rng(4), 3, 0, 5, 1, 2))
    Z = sp.reduced
    np.testing.assert_allclose(sp.ring.N_ring, -np.vstack([Z.G[:, 5:], Z.A[:, 5:]]))
    np.testing.assert_allclose(sp.ring.c_ring, np.concatenate([Z.c, -Z.b]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kappa_max_bounds_the_box_maximum(seed):
    rng = np.random.default_rng(seed)
    nu = int(rng.integers(1, 5))
    sp = zonotope_equivalent(_synthetic_reduced(rng, 3, 1, 5, 1, nu))
    bound = bound_kappa_max(sp)
    # the ring level is convex in xi_u, so its box maximum sits at a vertex
    best = max(sp.ring.kappa(v) for v in itertools.product([-1.0, 1.0], repeat=nu))
    assert bound >= best - 1e-7


def test_kappa_max_singleton_input_is_exact():
    sp = zonotope_equivalent(_synthetic_reduced(np.random.default_rng(5), 3, 1, 5, 1, 0))
    assert bound_kappa_max(sp) == pytest.approx(sp.ring.kappa(np.zeros(0)), abs=1e-8)


def test_merge_parallel():
    G = np.array([[1.0, 2.0, 0.0, 1.0], [1.0, 2.0, 0.0, -1.0]])
    Gm = merge_parallel(G)
    assert Gm.shape == (2, 2)
    np.testing.assert_allclose(np.sort(np.abs(Gm).sum(axis=0)), [2.0, 6.0])


# -- design and verification --------------------------------------------------

def test_scalar_design():
    f = scalar_set(limits=ReductionLimits(12, 2))
    res = design_input(f)
    assert res.cost == pytest.approx(0.99, rel=0.1)
    assert res.u[0] == 0.0 and np.all(np.abs(res.u) <= 2 + 1e-9)
    assert all(k >= f.eps - 1e-6 for k in res.kappa.values())
    counts = verify_diagnosis(f, res.u, 100, seed=0)
    np.testing.assert_array_equal(counts, 100 * np.eye(3, dtype=int))


def test_design_needs_two_models():
    with pytest.raises(ValueError):
        design_input(scalar_set(models=(0.5,)))


def test_stable_descriptor_designs_agree():
    rng = np.random.default_rng(6)
    f = random_fault_set(rng, n_models=2, N=2)
    f = FaultModelSet(**{**f.__dict__, "X_A": zonotope_box([100.0] * 3)})
    lz = design_input(f)
    cz = design_input(f, admissible=True)
    assert all(k >= f.eps - 1e-6 for k in lz.kappa.values())
    # the admissible set only shrinks the tubes, so the baseline cannot cost more
    assert cz.cost <= lz.cost + 1e-6


def test_verify_noise_free_distinct_models():
    point = lz_zonotope(np.zeros((1, 0)), [0.0])
    models = [DescriptorModel([[1.0]], [[a]], [[1.0]], [[1.0]], [[1.0]], [[0.0]], [[1.0]]) for a in (0.1, 0.9)]
    f = FaultModelSet(models, lz_zonotope(np.zeros((1, 0)), [1.0]), point, point, zonotope_box([1.0]), [0.0], 1, 0.1)
    np.testing.assert_array_equal(verify_diagnosis(f, [0.0, 0.0], 20, seed=1), [[20, 0], [0, 20]])


def test_samples_lie_in_own_tube():
    f = four_model_set()
    rng = np.random.default_rng(7)
    for i, tm in enumerate(transform_fault_models(f)):
        Y = output_tubes(f)[i].at(U_SEPARATING)
        for y in sample_outputs(tm, f, U_SEPARATING, 20, rng):
            assert membership(y, Y, tol=1e-7)


def test_tube_hulls_rows():
    f = scalar_set()
    rows = tube_hulls(f, [0, 0.99, 0, 0])
    assert len(rows) == 3 * 4
    assert rows[0][:3] == (0, 0, 0) and rows[0][3] == -np.inf  # X0 is the whole line
    assert all(lo <= hi for *_, lo, hi in rows)
