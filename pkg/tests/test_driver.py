import numpy as np
import pytest

from conftest import make_quadratic
from minimax_spp.driver import (DivergenceError, RankDeficiencyError, SolverConfig, fit_contraction, inner_step,
                                outer_loop, project_onto_C, theoretical_alpha_bound, theoretical_ratio,
                                tolerance_schedule)
from minimax_spp.problem import IterateState, ProblemSpec, natural_residual, solve_kkt_reference
from minimax_spp.prox import SquaredL2
from minimax_spp.sampling import SamplerConfig, draw_batch, svrg_correction
from oracles import implicit_step_dense

pytestmark = pytest.mark.filterwarnings("ignore:alpha=.*exceeds:RuntimeWarning")


def with_constants(Lg, Lh, Lf):
    p = make_quadratic(0)
    return ProblemSpec(p.family, p.A, p.B, p.c, L_g_bar=Lg, L_h_bar=Lh, L_f_bar=Lf)


def test_alpha_bound_single_inner_step():
    p = with_constants(2.0, 3.0, 1.0)
    # m_inner = 1 removes the variance terms: 1 / max(L_phi_x, L_phi_y) = 1 / 4
    assert theoretical_alpha_bound(p, 1, 5) == pytest.approx(0.25)


def test_alpha_bound_hand_value():
    p = with_constants(1.0, 1.0, 1.0)  # L_phi_x = L_phi_y = 2
    # m = 2, b = 2: 1 / (2 + sqrt(4) * 2 / sqrt(2) + sqrt(2) * 2 / 2)
    expected = 1.0 / (2.0 + 2.0 * 2.0 / np.sqrt(2.0) + np.sqrt(2.0))
    assert theoretical_alpha_bound(p, 2, 2) == pytest.approx(expected)


def test_alpha_bound_takes_the_smaller_term():
    p = with_constants(1.0, 5.0, 0.0)  # L_phi_x = 1, L_phi_y = 5
    t1 = 1 / (1 + np.sqrt(12) * 1 / np.sqrt(4) + np.sqrt(6) * 5 / np.sqrt(8))
    t2 = 1 / (5 + np.sqrt(12) * 5 / np.sqrt(4) + np.sqrt(6) * 1 / np.sqrt(8))
    assert theoretical_alpha_bound(p, 3, 4) == pytest.approx(min(t1, t2))


def test_theoretical_ratio():
    assert theoretical_ratio(0.5, 1.0) == pytest.approx(0.5)
    assert theoretical_ratio(0.0, 1.0) == 1.0


def test_tolerance_schedule():
    p = make_quadratic(1)
    x, y, lam = np.ones(p.n), np.ones(p.m_dim), np.zeros(p.q)
    assert tolerance_schedule(p, 0, x, y, 0.0, 1e-9) == 1e-9
    rx = np.linalg.norm(natural_residual(p, "X", x, y, lam))
    ry = np.linalg.norm(natural_residual(p, "Y", x, y, lam))
    assert tolerance_schedule(p, 0, x, y, 0.1, 1e-12) == pytest.approx(0.1 * min(rx, ry))
    assert tolerance_schedule(p, 0, x, y, 1e-30, 1e-9) == 1e-9
    with pytest.raises(ValueError):
        tolerance_schedule(p, 0, x, y, -1.0, 1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(S=0)
    with pytest.raises(ValueError):
        SolverConfig(alpha=0.0)
    with pytest.raises(ValueError):
        SolverConfig(delta_ratio=2.0)
    assert SolverConfig(delta0=2.0, delta_ratio=0.5).delta(3) == pytest.approx(0.25)


@pytest.mark.parametrize("phi", [None, SquaredL2(0.7)])
def test_inner_step_matches_dense_implicit_step(phi):
    p = make_quadratic(2, N=6, phi=phi)
    cfg = SolverConfig(alpha=0.3, sampler=SamplerConfig("with", 3, 4), eps_floor=1e-13)
    rng = np.random.default_rng(0)
    st = IterateState(rng.standard_normal(p.n), rng.standard_normal(p.m_dim), rng.standard_normal(p.q))
    st.refresh_reference(p)
    st.x = st.x + 0.1  # move away from the reference so the corrections are nonzero
    new = inner_step(st, p, cfg, 2, 1)
    batch = draw_batch(cfg.sampler, p.N, (2, 1))
    vx, vy = svrg_correction(p, batch, st.x_ref, st.y_ref, st.cache)
    x1, y1, l1 = implicit_step_dense(p, st.x, st.y, st.lam, 0.3, batch, vx, vy)
    np.testing.assert_allclose(new.y, y1, atol=1e-11)
    np.testing.assert_allclose(new.x, x1, atol=1e-11)
    np.testing.assert_allclose(new.lam, l1, atol=1e-11)
    assert st.x is not new.x


def test_projection_properties():
    p = make_quadratic(3, n=5, m=4, q=3)
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal(p.n), rng.standard_normal(p.m_dim)
    xp, yp, zeta = project_onto_C(p, x, y)
    assert np.linalg.norm(p.residual(xp, yp)) <= 1e-12
    np.testing.assert_allclose(x - xp, p.A.T @ zeta, atol=1e-12)
    np.testing.assert_allclose(y - yp, p.B.T @ zeta, atol=1e-12)
    xpp, ypp, _ = project_onto_C(p, xp, yp)
    np.testing.assert_allclose(np.concatenate([xpp, ypp]), np.concatenate([xp, yp]), atol=1e-12)


def test_projection_rank_deficiency():
    p = make_quadratic(4)
    q = ProblemSpec(p.family, np.vstack([p.A[:1], p.A[:1]]), np.vstack([p.B[:1], p.B[:1]]), np.zeros(2))
    with pytest.raises(RankDeficiencyError):
        project_onto_C(q, np.zeros(q.n), np.zeros(q.m_dim))


def test_outer_loop_report_and_determinism():
    p = make_quadratic(5, N=8)
    ref = solve_kkt_reference(p)
    cfg = SolverConfig(S=4, m_inner=3, alpha=0.05, sampler=SamplerConfig("without", 2, 9), log_newton=True)
    st1, r1 = outer_loop(p, cfg, reference=ref)
    st2, r2 = outer_loop(p, cfg, reference=ref)
    assert len(r1.rows) == 5 and r1.rows[0]["s"] == 0
    assert set(r1.rows[0]) == {"s", "dist_sq_primal", "dist_sq_dual", "constraint_violation", "kkt_residual",
                               "mean_newton_iters", "wall_ms"}
    assert np.array_equal(st1.x, st2.x) and np.array_equal(st1.lam, st2.lam)
    assert r1.newton_rows and set(r1.newton_rows[0]) == {"s", "k", "block", "iter", "f_norm", "step", "cg_iters",
                                                         "eta"}
    assert np.isfinite(r1.fitted_ratio) and r1.theoretical_ratio < 1


def test_outer_loop_warns_above_bound():
    p = make_quadratic(6)
    with pytest.warns(RuntimeWarning, match="exceeds"):
        outer_loop(p, SolverConfig(S=1, m_inner=1, alpha=10.0, sampler=SamplerConfig("with", 1, 0)))


def test_outer_loop_projection_makes_references_feasible():
    p = make_quadratic(7)
    cfg = SolverConfig(S=3, m_inner=2, alpha=0.05, sampler=SamplerConfig("with", 2, 0), project_each_outer=True)
    st, rep = outer_loop(p, cfg)
    assert np.linalg.norm(p.residual(st.x_ref, st.y_ref)) <= 1e-10
    assert all(r["constraint_violation"] <= 1e-10 for r in rep.rows[1:])


def test_divergence_is_reported():
    p = make_quadratic(8)
    cfg = SolverConfig(S=40, m_inner=5, alpha=50.0, sampler=SamplerConfig("with", 1, 0), divergence_ratio=1e3)
    with pytest.warns(RuntimeWarning):
        with pytest.raises(DivergenceError) as exc:
            outer_loop(p, cfg, np.ones(p.n), np.ones(p.m_dim))
    assert exc.value.report is not None and len(exc.value.report.rows) >= 1


def test_fit_contraction():
    d = 3.0 * 0.5 ** np.arange(20)
    assert fit_contraction(d) == pytest.approx(0.5)
    # values at or below the floor end the window
    d2 = np.concatenate([0.1 ** np.arange(10), np.zeros(5)])
    assert fit_contraction(d2, floor=1e-24) == pytest.approx(0.1)
    assert np.isnan(fit_contraction([1.0]))
