"""Experiment protocols shared by the command line and the acceptance suite.

Each protocol returns plain Python data (lists of row dicts and summaries);
writing files is left to :mod:`minimax_spp.reporting`.
"""
import warnings

import numpy as np

from ..driver import DivergenceError, SolverConfig, fit_contraction, outer_loop, theoretical_alpha_bound, \
    theoretical_ratio
from ..problem import solve_kkt_reference
from ..sampling import SamplerConfig, make_rng
from ..ssn import SSNParams, SubproblemError
from .network import STRATEGIES, InfeasibleAttack, gen_flow_network, min_cost_flow_eval, \
    relative_cost_increase, run_strategy

__all__ = [
    "log_linear_slope",
    "rate_study",
    "relative_gradient_percentage",
    "regress_sweep",
    "decade_window",
    "trial_seed",
    "netflow_cell",
    "netflow_summary",
]


def log_linear_slope(values, floor=1e-300):
    """Least-squares slope of log(values) against the epoch index."""
    v = np.maximum(np.asarray(values, dtype=float), floor)
    s = np.arange(v.size)
    return float(np.polyfit(s, np.log(v), 1)[0])


def rate_study(problem, seeds=20, S=30, m_inner=5, batch=10, alpha=None, alpha_factor=0.9,
               delta0=1.0, delta_ratio=0.5, eps_floor=1e-14, mode="without", ssn=None):
    """Multi-seed run against the KKT reference.

    Returns a dict with the step size, its bound, the seed-averaged squared
    distance trajectories and the fitted and theoretical contraction ratios.
    """
    ref = solve_kkt_reference(problem)
    bound = theoretical_alpha_bound(problem, m_inner, batch)
    alpha = alpha_factor * bound if alpha is None else float(alpha)
    primal, dual = [], []
    for seed in range(seeds):
        cfg = SolverConfig(S=S, m_inner=m_inner, alpha=alpha, sampler=SamplerConfig(mode, batch, seed),
                           delta0=delta0, delta_ratio=delta_ratio, eps_floor=eps_floor,
                           ssn=ssn or SSNParams())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            _, rep = outer_loop(problem, cfg, reference=ref)
        primal.append(rep.column("dist_sq_primal"))
        dual.append(rep.column("dist_sq_dual"))
    primal = np.mean(primal, axis=0)
    dual = np.mean(dual, axis=0)
    mu_min = min(problem.mu_x, problem.mu_y)
    return {
        "alpha": alpha,
        "alpha_bound": bound,
        "mu_min": mu_min,
        "dist_sq_primal": primal,
        "dist_sq_dual": dual,
        "fitted_ratio": fit_contraction(primal),
        "theoretical_ratio": theoretical_ratio(alpha, mu_min),
        "dual_slope": log_linear_slope(dual),
        "dual_ratio": float(dual[-1] / dual[0]) if dual[0] > 0 else 0.0,
        "reference": ref,
    }


def relative_gradient_percentage(kkt):
    """100 * kkt_residual / initial kkt_residual."""
    kkt = np.asarray(kkt, dtype=float)
    return 100.0 * kkt / kkt[0] if kkt[0] > 0 else np.zeros_like(kkt)


def regress_sweep(problem, alphas, m_inners=(10,), batches=(10,), trials=7, S=30, seed=0,
                  mode="without", eps_floor=1e-14, ssn=None):
    """Relative gradient percentage curves over an (alpha, m_inner, b) grid.

    All trials start from one seeded random point; trial o uses sampler seed
    ``seed + o``. A diverging trial contributes +inf from the failing epoch
    on, so the averaged curve is +inf there. Returns ``(runs, cells)`` where
    runs hold the per-trial report rows and cells the averaged curves.
    """
    rng = make_rng(seed, 5)
    x0 = rng.standard_normal(problem.n)
    y0 = rng.standard_normal(problem.m_dim)
    ssn = ssn or SSNParams(eta_floor=1e-7)
    runs, cells = [], []
    for m_inner in m_inners:
        for b in batches:
            for alpha in alphas:
                curves, diverged = [], 0
                for o in range(trials):
                    cfg = SolverConfig(S=S, m_inner=m_inner, alpha=float(alpha),
                                       sampler=SamplerConfig(mode, b, seed + o), eps_floor=eps_floor, ssn=ssn)
                    status = "ok"
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", RuntimeWarning)
                        try:
                            _, rep = outer_loop(problem, cfg, x0, y0)
                        except (DivergenceError, SubproblemError, FloatingPointError) as exc:
                            rep = exc.report if isinstance(exc, DivergenceError) else None
                            status = "diverged"
                    rows = list(rep.rows) if rep is not None else []
                    kkt = np.full(S + 1, np.inf)
                    if rows:
                        kkt[: len(rows)] = [r["kkt_residual"] for r in rows]
                    if status != "ok":
                        diverged += 1
                    pct = 100.0 * kkt / kkt[0] if np.isfinite(kkt[0]) and kkt[0] > 0 else kkt
                    curves.append(pct)
                    runs.append({"alpha": float(alpha), "m_inner": m_inner, "b": b, "trial": o,
                                 "status": status, "rows": rows})
                with np.errstate(invalid="ignore", over="ignore"):
                    mean = np.mean(curves, axis=0)
                cells.append({"alpha": float(alpha), "m_inner": m_inner, "b": b, "curve": mean,
                              "final": float(mean[-1]), "diverged": diverged, "trials": trials})
    return runs, cells


def decade_window(cells):
    """Best cell by final percentage and the cells whose alpha lies within a decade around it.

    The window is [best / sqrt(10), best * sqrt(10)], one decade wide on a
    log scale. Returns ``(best, window)``; ``best`` is None when every cell
    diverged.
    """
    finite = [c for c in cells if np.isfinite(c["final"])]
    if not finite:
        return None, list(cells)
    best = min(finite, key=lambda c: c["final"])
    lo, hi = best["alpha"] / np.sqrt(10.0), best["alpha"] * np.sqrt(10.0)
    window = [c for c in cells if lo * (1 - 1e-12) <= c["alpha"] <= hi * (1 + 1e-12)
              and c["m_inner"] == best["m_inner"] and c["b"] == best["b"]]
    return best, window


def trial_seed(seed, p_er, sigma, trial):
    """Instance seed of one trial; distinct cells and trials get independent streams."""
    key = (int(round(p_er * 1e6)), int(round(sigma * 1e9)), int(trial))
    return int(make_rng(seed, 6, *key).integers(0, 2 ** 63 - 1))


def netflow_cell(p_er, sigma, trials=15, budget_fracs=(0.25, 0.5, 1.0), seed=0, n_nodes=10, M=2000,
                 strategies=STRATEGIES, solver_kw=None, mgd_kw=None):
    """Trials of one (p_er, sigma) cell.

    Budgets are fractions of the demand r_t of each instance (any budget up
    to r_t leaves the demand routable). Returns trial rows with keys trial,
    strategy, budget (the fraction), rho, feasible, q_clean, q_attacked.
    """
    rows = []
    for trial in range(trials):
        net = gen_flow_network(n_nodes, p_er, sigma, M, 1.0, trial_seed(seed, p_er, sigma, trial))
        clean = min_cost_flow_eval(net, np.zeros(net.n_edges))
        for frac in budget_fracs:
            nb = net.with_budget(frac * net.r_t)
            for name in strategies:
                try:
                    y = run_strategy(name, nb, seed=trial, solver_kw=solver_kw, mgd_kw=mgd_kw)
                    res = relative_cost_increase(nb, y, name, clean)
                    rho, feas, q_att = res.rho, res.feasible, res.q_attacked
                except (InfeasibleAttack, DivergenceError, SubproblemError, FloatingPointError):
                    rho, feas, q_att = float("inf"), False, float("inf")
                rows.append({"trial": trial, "strategy": name, "budget": float(frac), "rho": float(rho),
                             "feasible": bool(feas), "q_clean": float(clean[1]), "q_attacked": float(q_att)})
    return rows


def netflow_summary(rows):
    """Mean rho per (strategy, budget) and per strategy over feasible trials, with infeasible counts."""
    strategies = list(dict.fromkeys(r["strategy"] for r in rows))
    budgets = sorted(set(r["budget"] for r in rows))
    per_budget, overall, infeasible = {}, {}, {}
    for name in strategies:
        mine = [r for r in rows if r["strategy"] == name]
        ok = [r["rho"] for r in mine if r["feasible"]]
        overall[name] = float(np.mean(ok)) if ok else float("nan")
        infeasible[name] = len(mine) - len(ok)
        per_budget[name] = {}
        for b in budgets:
            vals = [r["rho"] for r in mine if r["budget"] == b and r["feasible"]]
            per_budget[name][b] = float(np.mean(vals)) if vals else float("nan")
    return {"budgets": budgets, "mean_rho": overall, "mean_rho_by_budget": per_budget,
            "infeasible": infeasible}
