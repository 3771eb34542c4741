"""Adversarial attacks on stochastic min-cost flow networks.

An operator routes a demand r_t from s to t at minimum expected cost
sum_e w_e (x_e + y_e) x_e, where the attacker's injection y (with
0 <= y <= p and sum y = budget) both raises unit costs and consumes capacity
(x + y <= p). The attacker maximizes the operator's optimal cost; the SAA
version averages over M Gaussian cost samples w^m ~ N(w, sigma^2).

Strategies: SNmMSPP on the SAA problem, multiplier gradient descent (MGD) on
the average-cost problem, and the Random / MaxCapacity / Greedy heuristics.
They are compared by the relative cost increase rho = (q_att - q_cl) / q_cl.
"""
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..driver import SolverConfig, outer_loop, project_onto_C
from ..problem import FORMAT, DiagonalQuadraticFamily, ProblemSpec, full_gradients
from ..prox import BoxIndicator
from ..sampling import SamplerConfig, make_rng
from ..ssn import SSNParams

__all__ = [
    "FlowNetworkInstance",
    "AttackResult",
    "InfeasibleAttack",
    "STRATEGIES",
    "gen_flow_network",
    "max_flow",
    "reformulate_with_slacks",
    "min_cost_flow_eval",
    "baseline_attack",
    "mgd_attack",
    "snmmspp_attack",
    "relative_cost_increase",
    "run_strategy",
    "network_to_json",
    "network_from_json",
]

STRATEGIES = ("SNmMSPP", "MGD", "Random", "MaxCapacity", "Greedy")


class InfeasibleAttack(ValueError):
    """The attacked network cannot carry the demand."""


@dataclass
class FlowNetworkInstance:
    n_nodes: int
    edges: np.ndarray
    cap: np.ndarray
    base_cost: np.ndarray
    cost_samples: np.ndarray
    s: int
    t: int
    r_t: float
    budget: float
    eta_y: float = 1e-5
    sigma: float = 0.0
    p_er: float = 0.0
    seed: int = 0
    attempt: int = 0
    max_flow_value: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def M(self):
        return self.cost_samples.shape[0]

    @property
    def mean_cost(self):
        return self.cost_samples.mean(axis=0)

    def with_budget(self, budget):
        """Copy sharing all arrays, with a different attack budget."""
        return FlowNetworkInstance(self.n_nodes, self.edges, self.cap, self.base_cost, self.cost_samples,
                                   self.s, self.t, self.r_t, float(budget), self.eta_y, self.sigma, self.p_er,
                                   self.seed, self.attempt, self.max_flow_value, dict(self.meta))

    def capacity_matrix(self, cap=None):
        cap = self.cap if cap is None else cap
        C = np.zeros((self.n_nodes, self.n_nodes))
        C[self.edges[:, 0], self.edges[:, 1]] = cap
        return C

    def node_rows(self):
        """Incidence rows (inflow - outflow) for every node except s; the last row is t."""
        others = [v for v in range(self.n_nodes) if v not in (self.s, self.t)] + [self.t]
        pos = {v: i for i, v in enumerate(others)}
        Mx = np.zeros((len(others), self.n_edges))
        for e, (i, j) in enumerate(self.edges):
            if j in pos:
                Mx[pos[j], e] += 1.0
            if i in pos:
                Mx[pos[i], e] -= 1.0
        d = np.zeros(len(others))
        d[-1] = self.r_t
        return Mx, d


@dataclass
class AttackResult:
    strategy: str
    y: np.ndarray
    x_cl: np.ndarray
    x_att: np.ndarray
    q_clean: float
    q_attacked: float
    rho: float
    feasible: bool = True


def _reach(adj, start):
    seen = {start}
    dq = deque([start])
    while dq:
        u = dq.popleft()
        for v in np.nonzero(adj[u])[0]:
            if v not in seen:
                seen.add(int(v))
                dq.append(int(v))
    return seen


def _sample_graph(n_nodes, p_er, rng):
    adj = rng.random((n_nodes, n_nodes)) < p_er
    np.fill_diagonal(adj, False)
    s, t = 0, n_nodes - 1
    adj[:, s] = False
    adj[t, :] = False
    keep = _reach(adj, s) & _reach(adj.T, t)
    if t not in keep:
        return None
    mask = np.zeros(n_nodes, dtype=bool)
    mask[list(keep)] = True
    adj &= mask[:, None] & mask[None, :]
    # relabel kept nodes 0..k-1 keeping s first and t last
    order = [v for v in range(n_nodes) if mask[v]]
    lab = {v: i for i, v in enumerate(order)}
    edges = np.array([(lab[i], lab[j]) for i, j in zip(*np.nonzero(adj))], dtype=np.intp).reshape(-1, 2)
    return len(order), edges


def _cost_samples(seed, attempt, base_cost, sigma, M):
    rng = make_rng(seed, 3, attempt)
    return base_cost[None, :] + sigma * rng.standard_normal((M, len(base_cost)))


def gen_flow_network(n_nodes=10, p_er=0.3, sigma=0.001, M=2000, budget_frac=0.5, seed=0,
                     eta_y=1e-5, max_retries=100):
    """Erdos-Renyi flow network with U[1,2] capacities/costs and Gaussian cost samples.

    Edges into s and out of t are dropped and only nodes on some s-t path are
    kept, which leaves the optimal flows unchanged and makes the constraint
    matrix of the minimax reformulation full row rank. The demand is half the
    max flow and the budget ``budget_frac * r_t``.
    """
    if n_nodes < 3 or not 0 < p_er < 1:
        raise ValueError("need n_nodes >= 3 and 0 < p_er < 1")
    for attempt in range(max_retries):
        rng = make_rng(seed, 2, attempt)
        g = _sample_graph(n_nodes, p_er, rng)
        if g is None or len(g[1]) == 0:
            continue
        k, edges = g
        E = len(edges)
        cap = rng.uniform(1.0, 2.0, E)
        w = rng.uniform(1.0, 2.0, E)
        net = FlowNetworkInstance(k, edges, cap, w, np.empty((0, E)), 0, k - 1, 0.0, 0.0, eta_y, sigma,
                                  p_er, seed, attempt)
        mf = max_flow(net)
        if mf <= 0:
            continue
        net.max_flow_value = mf
        net.r_t = 0.5 * mf
        net.budget = budget_frac * net.r_t
        net.cost_samples = _cost_samples(seed, attempt, w, sigma, M)
        return net
    raise RuntimeError(f"no s-t connected graph after {max_retries} attempts (p_er={p_er} too small?)")


def max_flow(net, cap=None, tol=1e-9):
    """Maximum s-t flow value (Edmonds-Karp)."""
    val, _ = _kernels.max_flow_dense(net.capacity_matrix(cap), net.s, net.t, tol)
    return float(val)


def reformulate_with_slacks(net, eps_z=1e-8, costs=None):
    """Minimax problem with min-block u = (x, z) and max-block y.

    Rows: conservation at interior nodes, demand at t, x + y + z = p, and
    sum y = budget. Component m has g_m(u) = sum_e w^m_e x_e^2 + eps_z ||z||^2 / 2,
    f_m(u, y) = sum_e w^m_e x_e y_e and h(y) = eta_y ||y||^2 / 2; x in [0, p],
    z >= 0 and y in [0, p] are the regularizers. ``costs`` overrides the
    cost samples (a (M, E) array), e.g. with the mean costs for MGD.
    """
    W = net.cost_samples if costs is None else np.atleast_2d(costs)
    E = net.n_edges
    Mx, d = net.node_rows()
    nr = Mx.shape[0]
    q = nr + E + 1
    A = np.zeros((q, 2 * E))
    B = np.zeros((q, E))
    c = np.zeros(q)
    A[:nr, :E] = Mx
    c[:nr] = -d
    A[nr:nr + E, :E] = np.eye(E)
    A[nr:nr + E, E:] = np.eye(E)
    B[nr:nr + E] = np.eye(E)
    c[nr:nr + E] = -net.cap
    B[-1] = 1.0
    c[-1] = -net.budget
    P = np.hstack([2.0 * W, np.full((W.shape[0], E), eps_z)])
    fam = DiagonalQuadraticFamily(P, np.zeros(2 * E), np.full(E, net.eta_y), np.zeros(E), W, np.arange(E))
    phi = BoxIndicator(np.zeros(2 * E), np.concatenate([net.cap, np.full(E, np.inf)]))
    psi = BoxIndicator(np.zeros(E), net.cap)
    prob = ProblemSpec(fam, A, B, c, phi=phi, psi=psi)
    prob.meta.update(kind="network", n_rows_nodes=nr, eps_z=eps_z)
    return prob


def min_cost_flow_eval(net, y_attack, tol=1e-10, max_iter=500):
    """Optimal operator flow and expected cost under attack ``y_attack``.

    Solves min sum_e wbar_e (x_e + y_e) x_e over conservation, demand and
    0 <= x <= p - y. The problem is a separable strictly convex QP; it is
    solved through its concave dual in the node potentials by a regularized
    Newton method with backtracking, after a max-flow feasibility check.
    """
    y = np.asarray(y_attack, dtype=float)
    if np.any(y < -1e-12) or np.any(y > net.cap + 1e-9):
        raise ValueError("attack must satisfy 0 <= y <= p")
    wbar = net.mean_cost
    ub = np.maximum(net.cap - y, 0.0)
    if max_flow(net, ub) < net.r_t - 1e-9:
        raise InfeasibleAttack("attacked network cannot carry the demand")
    Mx, d = net.node_rows()
    lin = wbar * y

    def primal(pi):
        return np.clip(-(lin + Mx.T @ pi) / (2.0 * wbar), 0.0, ub)

    def dual(pi, x):
        return float(np.sum(wbar * x * x + lin * x) + pi @ (Mx @ x - d))

    pi = np.zeros(len(d))
    x = primal(pi)
    val = dual(pi, x)
    scale = 1.0 + net.r_t
    for _ in range(max_iter):
        g = Mx @ x - d
        gn = float(np.linalg.norm(g))
        if gn <= tol * scale:
            break
        free = (x > 0.0) & (x < ub)
        Hm = (Mx[:, free] / (2.0 * wbar[free])) @ Mx[:, free].T
        reg = min(1.0, gn) * 1e-3 + 1e-14
        step_dir = np.linalg.solve(Hm + reg * np.eye(len(d)), g)
        slope = float(g @ step_dir)
        t = 1.0
        for _ls in range(60):
            pn = pi + t * step_dir
            xn = primal(pn)
            vn = dual(pn, xn)
            if vn >= val + 1e-4 * t * slope - 1e-15 * abs(val):
                break
            t *= 0.5
        pi, x, val = pn, xn, vn
    else:
        raise RuntimeError("min-cost flow dual Newton did not converge")
    q_tot = float(np.sum(wbar * (x + y) * x))
    return x, q_tot


def _fill(order, cap, budget):
    y = np.zeros_like(cap)
    left = budget
    for e in order:
        if left <= 0:
            break
        take = min(cap[e], left)
        y[e] = take
        left -= take
    return y


def baseline_attack(kind, net, seed=0):
    """Heuristic attacks; ties are broken by edge index."""
    cap, budget, E = net.cap, net.budget, net.n_edges
    if budget > cap.sum() + 1e-12:
        raise ValueError("budget exceeds total capacity")
    idx = np.arange(E)
    if kind == "MaxCapacity":
        return _fill(np.lexsort((idx, -cap)), cap, budget)
    if kind == "Greedy":
        return _fill(np.lexsort((idx, net.mean_cost)), cap, budget)
    if kind == "Random":
        rng = make_rng(seed, 4)
        dirn = rng.dirichlet(np.ones(E))
        y = budget * dirn
        for _ in range(10 * E + 10):
            y = np.minimum(y, cap)
            deficit = budget - y.sum()
            free = y < cap
            if deficit <= 1e-13 * (1.0 + budget) or not np.any(free):
                break
            y[free] += deficit * dirn[free] / dirn[free].sum()
        return y
    raise ValueError(f"unknown baseline {kind!r}")


def _budget_projection(net, y):
    return _kernels.capped_simplex_projection(y, 0.0, net.cap, net.budget)


def initial_point(net, prob):
    """Start at the clean min-cost flow with a uniform attack.

    The slack absorbs the remaining capacity and the multipliers are the
    least-squares fit of the stationarity conditions at that point.
    """
    E = net.n_edges
    x_cl, _ = min_cost_flow_eval(net, np.zeros(E))
    y0 = _budget_projection(net, np.full(E, net.budget / E))
    z0 = np.maximum(net.cap - x_cl - y0, 0.0)
    u0 = np.concatenate([x_cl, z0])
    gx, gy = full_gradients(prob, u0, y0)
    # A'lam = -gx and B'lam = gy
    lhs = np.vstack([prob.A.T, prob.B.T])
    rhs = np.concatenate([-gx, gy])
    lam0 = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    return u0, y0, lam0


def snmmspp_attack(net, S=200, m_inner=5, alpha=0.002, batch=10, eps_sub=1e-10, seed=0,
                   ssn=None, project_each_outer=True, return_report=False):
    """Attack from the stochastic solver on the SAA problem (budget-projected)."""
    prob = reformulate_with_slacks(net)
    ssn = ssn or SSNParams(gamma_hat=0.4, rho=0.99, tau=0.1, tau1=0.01, tau2=1e-6, eta_floor=1e-7)
    cfg = SolverConfig(S=S, m_inner=m_inner, alpha=alpha, sampler=SamplerConfig("without", batch, seed),
                       delta0=0.0, eps_floor=eps_sub, project_each_outer=project_each_outer, ssn=ssn)
    u0, y0, lam0 = initial_point(net, prob)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        state, report = outer_loop(prob, cfg, u0, y0, lam0)
    y = _budget_projection(net, state.y)
    return (y, report) if return_report else y


def mgd_attack(net, T=100, K=5, step_out=0.5, step_in=0.5):
    """Multiplier gradient method on the mean-cost problem.

    Per outer step: K rounds of a projected descent step in u = (x, z)
    followed by a projected ascent step in y, then a multiplier step
    lambda <- lambda + step_out (A u + B y + c). The output is projected onto
    the budget set.
    """
    prob = reformulate_with_slacks(net, costs=net.mean_cost)
    u, y, lam = initial_point(net, prob)
    idx = np.array([0])
    for _ in range(T):
        for _ in range(K):
            gu = prob.grad_x_rows(idx, u, y)[0] + prob.A.T @ lam
            u = prob.phi.prox(step_in, u - step_in * gu)
            gy = prob.grad_y_rows(idx, u, y)[0] - prob.B.T @ lam
            y = prob.psi.prox(step_in, y - step_in * gy)
        lam = lam + step_out * prob.residual(u, y)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y)) and np.all(np.isfinite(lam))):
            raise FloatingPointError("MGD produced a non-finite iterate")
    return _budget_projection(net, y)


def relative_cost_increase(net, y, strategy="custom", clean=None):
    """rho = (q_att - q_cl) / q_cl; rho = +inf with feasible=False if the attack blocks the demand."""
    x_cl, q_cl = clean if clean is not None else min_cost_flow_eval(net, np.zeros(net.n_edges))
    try:
        x_att, q_att = min_cost_flow_eval(net, y)
    except InfeasibleAttack:
        return AttackResult(strategy, np.asarray(y), x_cl, None, q_cl, float("inf"), float("inf"), False)
    return AttackResult(strategy, np.asarray(y), x_cl, x_att, q_cl, q_att, (q_att - q_cl) / q_cl, True)


def run_strategy(name, net, seed=0, solver_kw=None, mgd_kw=None):
    """Attack vector of one of :data:`STRATEGIES`."""
    if net.budget == 0:
        return np.zeros(net.n_edges)
    if name == "SNmMSPP":
        return snmmspp_attack(net, seed=seed, **(solver_kw or {}))
    if name == "MGD":
        return mgd_attack(net, **(mgd_kw or {}))
    return baseline_attack(name, net, seed=seed)


def network_to_json(net):
    """Serializable description; cost samples are regenerated from (seed, attempt)."""
    return {
        "format": FORMAT,
        "kind": "flow_network",
        "n_nodes": net.n_nodes,
        "edges": net.edges.tolist(),
        "cap": net.cap.tolist(),
        "base_cost": net.base_cost.tolist(),
        "s": net.s,
        "t": net.t,
        "r_t": net.r_t,
        "budget": net.budget,
        "eta_y": net.eta_y,
        "sigma": net.sigma,
        "p_er": net.p_er,
        "M": net.M,
        "seed": net.seed,
        "attempt": net.attempt,
        "max_flow": net.max_flow_value,
    }


def network_from_json(doc):
    if doc.get("format") != FORMAT or doc.get("kind") != "flow_network":
        raise ValueError("not a flow network document")
    w = np.asarray(doc["base_cost"], dtype=float)
    samples = _cost_samples(doc["seed"], doc["attempt"], w, doc["sigma"], doc["M"])
    return FlowNetworkInstance(doc["n_nodes"], np.asarray(doc["edges"], dtype=np.intp).reshape(-1, 2),
                               np.asarray(doc["cap"], dtype=float), w, samples, doc["s"], doc["t"],
                               doc["r_t"], doc["budget"], doc["eta_y"], doc["sigma"], doc["p_er"],
                               doc["seed"], doc["attempt"], doc.get("max_flow", 0.0))
