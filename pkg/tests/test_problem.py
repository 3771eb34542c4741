import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_quadratic
from minimax_spp.problem import (FORMAT, DiagonalQuadraticFamily, GradientCache, IterateState, ProblemSpec,
                                 QuadraticFamily, UnsupportedProblem, batch_mean, full_gradients, kkt_residual,
                                 lagrangian_value, natural_residual, problem_from_json, problem_to_json,
                                 solve_kkt_reference)
from minimax_spp.prox import BoxIndicator, ScaledL1, Zero


def fd_grad(f, x, h=1e-6):
    return np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(len(x))])


def scalar_problem(A, B, c):
    fam = QuadraticFamily(np.eye(1), np.zeros(1), np.eye(1), np.zeros(1), np.zeros((1, 1, 1)))
    return ProblemSpec(fam, np.array([[A]]), np.array([[B]]), np.array([c]))


def test_stated_scalar_example_is_singular():
    # g = x^2/2, h = y^2/2, A = B = 1, c = -2: the KKT matrix [[1,0,1],[0,-1,1],[1,1,0]] has rank 2
    with pytest.raises(np.linalg.LinAlgError, match="singular"):
        solve_kkt_reference(scalar_problem(1.0, 1.0, -2.0))


def test_scalar_kkt_hand_example():
    # x + 2 lam = 0, -y + lam = 0, 2x + y = 3  =>  (x, y, lam) = (2, -1, -1)
    sp = solve_kkt_reference(scalar_problem(2.0, 1.0, -3.0))
    np.testing.assert_allclose([sp.x_star[0], sp.y_star[0], sp.lambda_star[0]], [2.0, -1.0, -1.0], atol=1e-14)
    assert sp.kkt_residual <= 1e-14


@pytest.mark.parametrize("seed", range(5))
def test_kkt_reference_zeroes_the_residual(seed):
    p = make_quadratic(seed, n=6, m=5, q=3, N=7)
    sp = solve_kkt_reference(p)
    assert kkt_residual(p, sp.x_star, sp.y_star, sp.lambda_star) <= 1e-10
    for block in ("X", "Y"):
        assert np.linalg.norm(natural_residual(p, block, sp.x_star, sp.y_star, sp.lambda_star, 0.3)) <= 1e-10


def test_kkt_reference_requires_smooth_problem():
    p = make_quadratic(0, phi=ScaledL1(1.0))
    with pytest.raises(UnsupportedProblem):
        solve_kkt_reference(p)


@pytest.mark.parametrize("shared", [False, True])
def test_gradients_match_finite_differences(shared):
    p = make_quadratic(3, shared=shared)
    fam = p.family
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(p.n), rng.standard_normal(p.m_dim)
    for i in range(p.N):
        idx = np.array([i])
        gval = lambda x_: fam.g_val(idx, x_)[0] + fam.f_val(idx, x_, y)[0]
        hval = lambda y_: fam.h_val(idx, y_)[0] - fam.f_val(idx, x, y_)[0]
        np.testing.assert_allclose(p.grad_x_rows(idx, x, y)[0], fd_grad(gval, x), atol=1e-7)
        np.testing.assert_allclose(p.grad_y_rows(idx, x, y)[0], fd_grad(hval, y), atol=1e-7)


@pytest.mark.parametrize("shared", [False, True])
def test_conjugate_gradient_inverts_gradient(shared):
    p = make_quadratic(4, shared=shared)
    fam = p.family
    rng = np.random.default_rng(1)
    idx = np.array([0, 3, 3, 1])
    y, x = rng.standard_normal(p.m_dim), rng.standard_normal(p.n)
    XI = rng.standard_normal((4, p.n))
    xs = fam.conj_grad_x(idx, XI, y)
    np.testing.assert_allclose(p.grad_x_rows(idx, xs, y), XI, atol=1e-12)
    ETA = rng.standard_normal((4, p.m_dim))
    ys = fam.conj_grad_y(idx, ETA, x)
    np.testing.assert_allclose(p.grad_y_rows(idx, x, ys), ETA, atol=1e-12)
    # the Jacobian of grad conj is the inverse Hessian
    J = fam.conj_jac_x(idx, XI, y)
    np.testing.assert_allclose(J[0] @ (fam.P[0] if fam.P.ndim == 3 else fam.P), np.eye(p.n), atol=1e-12)


def dense_twin(dfam):
    # the same components as a dense QuadraticFamily
    N, n, m = dfam.N, dfam.n, dfam.m
    per = lambda a: np.broadcast_to(a, (N,) + a.shape[-1:]) if a.ndim == 1 else a
    P, Q, k = per(dfam.P), per(dfam.Q), per(dfam.k)
    K = np.zeros((N, m, n))
    K[:, np.arange(m), dfam.couple] = k
    return QuadraticFamily(np.stack([np.diag(r) for r in P]), per(dfam.p), np.stack([np.diag(r) for r in Q]),
                           per(dfam.q), K)


def test_diagonal_family_matches_dense_twin():
    rng = np.random.default_rng(2)
    N, n, m = 6, 5, 3
    dfam = DiagonalQuadraticFamily(rng.uniform(1, 2, (N, n)), rng.standard_normal(n), np.full(m, 0.5),
                                   np.zeros(m), rng.uniform(1, 2, (N, m)), np.array([4, 0, 2]))
    qfam = dense_twin(dfam)
    idx = np.array([5, 0, 0, 2])
    x, y = rng.standard_normal(n), rng.standard_normal(m)
    XI, ETA = rng.standard_normal((4, n)), rng.standard_normal((4, m))
    for name in ("grad_g", "g_val"):
        np.testing.assert_allclose(getattr(dfam, name)(idx, x), getattr(qfam, name)(idx, x), atol=1e-13)
    for name in ("grad_h", "h_val"):
        np.testing.assert_allclose(getattr(dfam, name)(idx, y), getattr(qfam, name)(idx, y), atol=1e-13)
    for name in ("grad_f_x", "grad_f_y", "f_val"):
        np.testing.assert_allclose(getattr(dfam, name)(idx, x, y), getattr(qfam, name)(idx, x, y), atol=1e-13)
    np.testing.assert_allclose(dfam.conj_grad_x(idx, XI, y), qfam.conj_grad_x(idx, XI, y), atol=1e-12)
    np.testing.assert_allclose(dfam.conj_grad_y(idx, ETA, x), qfam.conj_grad_y(idx, ETA, x), atol=1e-12)
    Jd = dfam.conj_jac_x(idx, XI, y)
    np.testing.assert_allclose(np.stack([np.diag(r) for r in Jd]), qfam.conj_jac_x(idx, XI, y), atol=1e-12)
    assert dfam.moduli() == pytest.approx(qfam.moduli())


def test_diagonal_family_validation():
    with pytest.raises(ValueError):
        DiagonalQuadraticFamily(np.ones(2), np.zeros(2), np.ones(2), np.zeros(2), np.ones(2), [0, 0])
    with pytest.raises(ValueError):
        DiagonalQuadraticFamily(-np.ones(2), np.zeros(2), np.ones(1), np.zeros(1), np.ones(1), [0])


def test_lagrangian_infinite_outside_domains():
    p = make_quadratic(0, phi=BoxIndicator([0.0] * 4, [1.0] * 4), psi=BoxIndicator([0.0] * 3, [1.0] * 3))
    lam = np.zeros(p.q)
    inside_x, inside_y = np.full(4, 0.5), np.full(3, 0.5)
    assert np.isfinite(lagrangian_value(p, inside_x, inside_y, lam))
    assert lagrangian_value(p, np.full(4, 2.0), inside_y, lam) == np.inf
    assert lagrangian_value(p, inside_x, np.full(3, 2.0), lam) == -np.inf


def test_lagrangian_gradient_consistency():
    p = make_quadratic(5)
    rng = np.random.default_rng(3)
    x, y, lam = rng.standard_normal(p.n), rng.standard_normal(p.m_dim), rng.standard_normal(p.q)
    gx, gy = full_gradients(p, x, y)
    np.testing.assert_allclose(fd_grad(lambda x_: lagrangian_value(p, x_, y, lam), x), gx + p.A.T @ lam, atol=1e-7)
    np.testing.assert_allclose(fd_grad(lambda y_: lagrangian_value(p, x, y_, lam), y), -gy + p.B.T @ lam, atol=1e-7)


def test_dimension_errors():
    p = make_quadratic(0)
    with pytest.raises(ValueError):
        full_gradients(p, np.zeros(p.n + 1), np.zeros(p.m_dim))
    with pytest.raises(ValueError):
        natural_residual(p, "Z", np.zeros(p.n), np.zeros(p.m_dim), np.zeros(p.q))
    with pytest.raises(ValueError):
        natural_residual(p, "X", np.zeros(p.n), np.zeros(p.m_dim), np.zeros(p.q), alpha=0.0)


def test_natural_residual_with_regularizer_hand_value():
    # one component g = x^2/2, no coupling, phi = |x|; at x = 0.5 the X residual is 0.5 - prox(0.5 - 0.5) = 0.5
    fam = QuadraticFamily(np.eye(1), np.zeros(1), np.eye(1), np.zeros(1), np.zeros((1, 1, 1)))
    p = ProblemSpec(fam, np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1), phi=ScaledL1(1.0))
    r = natural_residual(p, "X", np.array([0.5]), np.zeros(1), np.zeros(1))
    assert r[0] == pytest.approx(0.5)


def test_moduli_and_lipschitz_of_mean():
    p = make_quadratic(6, shared=True)
    Pbar = p.family.P
    assert p.mu_x == pytest.approx(np.linalg.eigvalsh(Pbar)[0])
    assert p.L_g_bar == pytest.approx(np.linalg.eigvalsh(Pbar)[-1])
    assert p.mu_star_x == pytest.approx(1.0 / (p.L_g_bar + p.L_f_bar))


def test_json_round_trip():
    p = make_quadratic(7, phi=BoxIndicator([-1.0] * 4, [np.inf] * 4))
    doc = problem_to_json(p)
    assert doc["format"] == FORMAT
    q = problem_from_json(doc)
    for name in ("A", "B", "c"):
        assert np.array_equal(getattr(p, name), getattr(q, name))
    assert q.phi == p.phi and q.mu_x == p.mu_x
    x, y = np.ones(p.n), np.ones(p.m_dim)
    np.testing.assert_array_equal(full_gradients(p, x, y)[0], full_gradients(q, x, y)[0])


def test_json_rejects_wrong_format():
    doc = problem_to_json(make_quadratic(0))
    doc["format"] = "other/1"
    with pytest.raises(ValueError):
        problem_from_json(doc)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2 ** 32 - 1))
def test_batch_mean_equals_sequential_sum(b, seed):
    rows = np.random.default_rng(seed).standard_normal((b, 4))
    acc = np.zeros(4)
    for r in rows:
        acc += r
    assert np.array_equal(batch_mean(rows), acc / b)


def test_full_batch_average_equals_full_gradient_bitwise():
    p = make_quadratic(8, N=9)
    x, y = np.ones(p.n), -np.ones(p.m_dim)
    perm = np.random.default_rng(0).permutation(p.N)
    a = p.batch_gradients(perm, x, y)
    b = full_gradients(p, x, y)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_gradient_cache_and_state():
    p = make_quadratic(9)
    st_ = IterateState(np.ones(p.n), np.ones(p.m_dim), np.zeros(p.q))
    st_.refresh_reference(p)
    assert isinstance(st_.cache, GradientCache) and st_.cache.matches(st_.x, st_.y)
    cp = st_.copy()
    cp.x[0] += 1.0
    assert st_.x[0] == 1.0 and not st_.cache.matches(cp.x, cp.y)


def test_problem_rejects_inconsistent_constraints():
    fam = make_quadratic(0).family
    with pytest.raises(ValueError):
        ProblemSpec(fam, np.zeros((2, fam.n)), np.zeros((3, fam.m)), np.zeros(2))
