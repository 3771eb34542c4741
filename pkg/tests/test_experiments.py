import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from minimax_spp.experiments import gen_quadratic, gen_regression
from minimax_spp.experiments.network import (STRATEGIES, FlowNetworkInstance, InfeasibleAttack, baseline_attack,
                                             gen_flow_network, initial_point, max_flow, mgd_attack,
                                             min_cost_flow_eval, network_from_json, network_to_json,
                                             reformulate_with_slacks, relative_cost_increase, run_strategy,
                                             snmmspp_attack)
from minimax_spp.experiments.protocols import decade_window, netflow_cell, netflow_summary, regress_sweep, trial_seed
from minimax_spp.problem import ProblemSpec, full_gradients


def hand_net(edges, cap, w, n_nodes, r_t, budget=0.0):
    edges = np.array(edges, dtype=np.intp).reshape(-1, 2)
    w = np.asarray(w, dtype=float)
    return FlowNetworkInstance(n_nodes, edges, np.asarray(cap, dtype=float), w, w[None, :].copy(), 0, n_nodes - 1,
                               r_t, budget)


def lp_max_flow(net):
    E, n = net.n_edges, net.n_nodes
    rows = []
    for v in range(n):
        if v in (net.s, net.t):
            continue
        rows.append([(1.0 if j == v else 0.0) - (1.0 if i == v else 0.0) for i, j in net.edges])
    obj = [-(1.0 if j == net.t else 0.0) + (1.0 if i == net.t else 0.0) for i, j in net.edges]
    res = linprog(obj, A_eq=rows or None, b_eq=[0.0] * len(rows) or None, bounds=list(zip([0] * E, net.cap)),
                  method="highs")
    return -res.fun


# regression --------------------------------------------------------------

def test_regression_moduli_are_exact():
    p = gen_regression(6, 8, 3, 10, 0.01, 0)
    assert p.mu_x == pytest.approx(1 / 8, rel=1e-12) and p.mu_y == pytest.approx(1 / 8, rel=1e-12)
    assert np.all(p.c == 0) and p.A.shape == (3, 6) and p.B.shape == (3, 8)


def test_regression_is_seed_reproducible():
    a, b = gen_regression(seed=3), gen_regression(seed=3)
    assert np.array_equal(a.family.K, b.family.K) and np.array_equal(a.A, b.A)
    assert not np.array_equal(a.A, gen_regression(seed=4).A)


def test_regression_entries_have_requested_scale():
    p = gen_regression(20, 20, 10, 200, 0.5, 1)
    assert np.std(p.A) == pytest.approx(0.5, rel=0.2)
    assert np.std(p.family.K * 20) == pytest.approx(0.5, rel=0.05)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_regression_limit_matches_kkt_reference():
    from minimax_spp.driver import SolverConfig, outer_loop
    from minimax_spp.problem import kkt_residual, solve_kkt_reference
    from minimax_spp.sampling import SamplerConfig
    p = gen_regression(5, 5, 2, 20, 0.01, 0)
    q = ProblemSpec(p.family, p.A, p.B, np.full(2, 0.01))  # nonzero c so the solution is not the origin
    ref = solve_kkt_reference(q)
    assert kkt_residual(q, ref.x_star, ref.y_star, ref.lambda_star) <= 1e-12
    # this small instance contracts for large steps; small ones converge too slowly for a unit test
    cfg = SolverConfig(S=60, m_inner=5, alpha=30.0, sampler=SamplerConfig("without", 5, 0), eps_floor=1e-13)
    st, _ = outer_loop(q, cfg, reference=ref)
    assert np.max(np.abs(st.x - ref.x_star)) <= 1e-6 and np.max(np.abs(st.y - ref.y_star)) <= 1e-6


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_constrained_regression_diverges_where_unconstrained_converges():
    # documents the instability of the explicit multiplier step when x carries constraints
    p = gen_regression(10, 10, 5, 100, 0.01, 0)
    free = ProblemSpec(p.family, np.zeros_like(p.A), np.zeros_like(p.B), p.c)
    _, cons = regress_sweep(p, [3.0], trials=1, S=30)
    _, unc = regress_sweep(free, [3.0], trials=1, S=30)
    assert cons[0]["final"] > 100.0
    assert unc[0]["final"] < 1e-4


def test_quadratic_catalog():
    p = gen_quadratic(seed=2)
    assert (p.n, p.m_dim, p.q, p.N) == (20, 20, 5, 50)
    assert p.mu_x >= 1.0 and p.mu_y >= 1.0
    assert np.array_equal(gen_quadratic(seed=2).c, p.c)


# network instances ---------------------------------------------------------

def test_max_flow_hand_examples():
    assert max_flow(hand_net([(0, 1)], [1.5], [1.0], 2, 0.5)) == pytest.approx(1.5)
    assert max_flow(hand_net([(0, 1), (1, 2), (0, 2)], [1.0, 5.0, 2.0], [1, 1, 1], 3, 1.0)) == pytest.approx(3.0)


@pytest.mark.parametrize("seed", range(5))
def test_generated_network_invariants(seed):
    net = gen_flow_network(10, 0.3, 0.01, 50, 0.5, seed)
    assert net.r_t == pytest.approx(0.5 * lp_max_flow(net), abs=1e-6)
    assert np.all(net.cap >= 1) and np.all(net.cap <= 2) and np.all(net.base_cost >= 1)
    assert net.budget == pytest.approx(0.5 * net.r_t)
    assert net.cost_samples.shape == (50, net.n_edges)
    assert not np.any(net.edges[:, 1] == net.s) and not np.any(net.edges[:, 0] == net.t)


def test_network_generation_is_deterministic():
    a, b = gen_flow_network(seed=9, M=20), gen_flow_network(seed=9, M=20)
    assert np.array_equal(a.edges, b.edges) and np.array_equal(a.cost_samples, b.cost_samples)


def test_network_generation_retries_exhausted():
    with pytest.raises(RuntimeError):
        gen_flow_network(10, 1e-9, 0.01, 10, 0.5, 0, max_retries=3)
    with pytest.raises(ValueError):
        gen_flow_network(2, 0.5)


def test_network_json_round_trip():
    net = gen_flow_network(seed=4, M=30)
    back = network_from_json(network_to_json(net))
    assert np.array_equal(back.cost_samples, net.cost_samples) and back.r_t == net.r_t


# reformulation -------------------------------------------------------------

def test_reformulation_rows_and_feasibility():
    net = gen_flow_network(seed=1, M=40)
    p = reformulate_with_slacks(net)
    interior = net.n_nodes - 2
    assert p.q == interior + 1 + net.n_edges + 1
    x_cl, _ = min_cost_flow_eval(net, np.zeros(net.n_edges))
    y = np.zeros(net.n_edges)
    u = np.concatenate([x_cl, net.cap - x_cl])
    p0 = reformulate_with_slacks(net.with_budget(0.0))
    assert np.linalg.norm(p0.residual(u, y)) <= 1e-10
    assert np.linalg.matrix_rank(np.hstack([p.A, p.B])) == p.q
    # the slack regularizer keeps the min block strongly convex
    assert p.mu_x == pytest.approx(min(2 * net.cost_samples.mean(axis=0).min(), 1e-8))


def test_reformulation_gradients():
    net = gen_flow_network(seed=2, M=25)
    p = reformulate_with_slacks(net)
    rng = np.random.default_rng(0)
    u, y = rng.uniform(0, 1, p.n), rng.uniform(0, 1, p.m_dim)
    gx, gy = full_gradients(p, u, y)
    w = net.cost_samples.mean(axis=0)
    E = net.n_edges
    np.testing.assert_allclose(gx[:E], 2 * w * u[:E] + w * y, atol=1e-12)
    np.testing.assert_allclose(gx[E:], 1e-8 * u[E:], atol=1e-18)
    np.testing.assert_allclose(gy, net.eta_y * y - w * u[:E], atol=1e-12)


def test_initial_point_is_feasible():
    net = gen_flow_network(seed=3, M=25)
    p = reformulate_with_slacks(net)
    u0, y0, lam0 = initial_point(net, p)
    assert np.linalg.norm(p.residual(u0, y0)) <= 1e-9
    assert y0.sum() == pytest.approx(net.budget)


# min-cost flow -------------------------------------------------------------

def test_min_cost_flow_single_edge():
    x, q = min_cost_flow_eval(hand_net([(0, 1)], [2.0], [1.5], 2, 1.0), np.zeros(1))
    assert x[0] == pytest.approx(1.0) and q == pytest.approx(1.5)


def test_min_cost_flow_parallel_edges_grid_search():
    net = hand_net([(0, 1), (0, 1)], [2.0, 2.0], [1.5, 1.2], 2, 1.5)
    y = np.array([0.3, 0.1])
    _, q = min_cost_flow_eval(net, y)
    grid = np.arange(0, 1.5 + 1e-12, 1e-3)
    vals = [1.5 * (a + 0.3) * a + 1.2 * (1.5 - a + 0.1) * (1.5 - a) for a in grid
            if a <= 1.7 and 1.5 - a <= 1.9]
    assert q == pytest.approx(min(vals), abs=1e-5)


def test_min_cost_flow_infeasible_attack():
    net = hand_net([(0, 1)], [2.0], [1.0], 2, 1.5)
    with pytest.raises(InfeasibleAttack):
        min_cost_flow_eval(net, np.array([1.0]))
    with pytest.raises(ValueError):
        min_cost_flow_eval(net, np.array([3.0]))


@pytest.mark.parametrize("seed", range(5))
def test_attack_never_lowers_cost(seed):
    net = gen_flow_network(seed=seed, M=20, budget_frac=1.0)
    _, q0 = min_cost_flow_eval(net, np.zeros(net.n_edges))
    for kind in ("Random", "MaxCapacity", "Greedy"):
        res = relative_cost_increase(net, baseline_attack(kind, net, seed))
        assert not res.feasible or res.rho >= -1e-9


# baselines -----------------------------------------------------------------

def test_maxcapacity_hand_example():
    net = hand_net([(0, 1), (0, 1), (0, 1)], [2.0, 1.5, 1.0], [1, 1, 1], 2, 1.0, budget=2.0)
    np.testing.assert_allclose(baseline_attack("MaxCapacity", net), [2.0, 0.0, 0.0])


def test_greedy_hand_example():
    net = hand_net([(0, 1), (0, 1), (0, 1)], [1.0, 1.0, 1.0], [1.9, 1.1, 1.5], 2, 1.0, budget=1.0)
    np.testing.assert_allclose(baseline_attack("Greedy", net), [0.0, 1.0, 0.0])


def test_random_attack_feasible_over_many_seeds():
    net = gen_flow_network(seed=0, M=5, budget_frac=1.0)
    for seed in range(1000):
        y = baseline_attack("Random", net, seed)
        assert abs(y.sum() - net.budget) <= 1e-8 and np.all(y >= 0) and np.all(y <= net.cap + 1e-12)


def test_baseline_errors():
    net = hand_net([(0, 1)], [1.0], [1.0], 2, 0.5, budget=5.0)
    with pytest.raises(ValueError):
        baseline_attack("MaxCapacity", net)
    with pytest.raises(ValueError):
        baseline_attack("Nope", net.with_budget(0.5))


def test_mgd_and_snmmspp_respect_budget_and_caps():
    net = gen_flow_network(seed=5, M=40)
    for y in (mgd_attack(net, T=20), snmmspp_attack(net, S=5)):
        assert abs(y.sum() - net.budget) <= 1e-8 and np.all(y >= -1e-12) and np.all(y <= net.cap + 1e-12)


def test_zero_budget_gives_zero_rho():
    net = gen_flow_network(seed=6, M=20).with_budget(0.0)
    for name in STRATEGIES:
        y = run_strategy(name, net)
        assert relative_cost_increase(net, y, name).rho == 0.0


def test_relative_cost_increase_infeasible_flag():
    net = hand_net([(0, 1)], [2.0], [1.0], 2, 1.5, budget=1.0)
    res = relative_cost_increase(net, np.array([1.0]))
    assert not res.feasible and res.rho == np.inf


# protocols -----------------------------------------------------------------

def test_decade_window():
    cells = [{"alpha": a, "m_inner": 10, "b": 10, "final": f}
             for a, f in ((0.1, 5.0), (0.3, 1.0), (1.0, 0.5), (3.0, 2.0), (10.0, np.inf))]
    best, window = decade_window(cells)
    assert best["alpha"] == 1.0 and [c["alpha"] for c in window] == [1.0, 3.0]
    best, window = decade_window([dict(c, final=np.inf) for c in cells])
    assert best is None and len(window) == len(cells)


def test_trial_seeds_are_distinct():
    seeds = {trial_seed(0, p, s, t) for p, s, t in itertools.product((0.3, 0.7), (0.001, 0.01), range(15))}
    assert len(seeds) == 60


def test_netflow_cell_rows_and_summary():
    rows = netflow_cell(0.3, 0.01, trials=1, budget_fracs=(0.0, 0.5), M=20, strategies=("Random", "MaxCapacity"))
    assert len(rows) == 4
    assert all(r["rho"] == 0.0 for r in rows if r["budget"] == 0.0)
    summ = netflow_summary(rows)
    assert summ["budgets"] == [0.0, 0.5] and set(summ["mean_rho"]) == {"Random", "MaxCapacity"}
