"""Command line entry point ``minimax-spp``.

    minimax-spp <regress|netflow|rate|proptest> --config PATH [--seed U64]
                [--trials N] [--out DIR] [--set key=value ...]

``--seed`` and ``--trials`` override the config keys of the same name;
``--set`` overrides any other key (values parsed as JSON).
"""
import argparse
import json
import os
import sys
import warnings

import numpy as np

from .driver import REPORT_COLUMNS
from .experiments import gen_quadratic, gen_regression
from .experiments.protocols import decade_window, netflow_cell, netflow_summary, rate_study, regress_sweep
from .problem import problem_from_json
from .proptest import run_case, run_suites
from .reporting import ConfigError, apply_overrides, load_config, write_csv, write_json, write_svg

__all__ = ["main", "build_parser", "run_regress", "run_netflow", "run_rate", "run_proptest"]

TRIAL_COLUMNS = ("trial", "strategy", "budget", "rho", "feasible", "q_clean", "q_attacked")


def _tag(v):
    return format(float(v), "g").replace("-", "m").replace("+", "")


def _load_problem(path):
    with open(path, encoding="utf-8") as fh:
        return problem_from_json(json.load(fh))


def run_regress(cfg, out):
    """Relative gradient percentage over the (alpha, m_inner, b) grid."""
    if cfg["problem"]:
        prob = _load_problem(cfg["problem"])
    else:
        prob = gen_regression(cfg["n"], cfg["m_dim"], cfg["p"], cfg["N"], cfg["sigma"], cfg["instance_seed"])
    runs, cells = regress_sweep(prob, cfg["alphas"], cfg["m_inners"], cfg["batches"], cfg["trials"], cfg["S"],
                                cfg["seed"], cfg["mode"], cfg["eps_floor"])
    for run in runs:
        rows = [dict(r) for r in run["rows"]]
        if not cfg["timing"]:
            for r in rows:
                r["wall_ms"] = float("nan")
        name = f"run_a{_tag(run['alpha'])}_m{run['m_inner']}_b{run['b']}_t{run['trial']}.csv"
        write_csv(os.path.join(out, "runs", name), REPORT_COLUMNS, rows)
    curve_rows = []
    for c in cells:
        for s, v in enumerate(c["curve"]):
            curve_rows.append({"alpha": c["alpha"], "m_inner": c["m_inner"], "b": c["b"], "s": s,
                               "rel_grad_pct": float(v)})
    write_csv(os.path.join(out, "regress_curves.csv"), ("alpha", "m_inner", "b", "s", "rel_grad_pct"), curve_rows)
    series = [(f"a={c['alpha']:g} m={c['m_inner']} b={c['b']}", range(len(c["curve"])), c["curve"])
              for c in cells]
    write_svg(os.path.join(out, "regress_curves.svg"), series, title="relative gradient percentage",
              xlabel="epoch s", ylabel="100 kkt / kkt0", logy=True)
    best, window = decade_window(cells)
    summary = {
        "command": "regress",
        "config": cfg,
        "cells": [{k: c[k] for k in ("alpha", "m_inner", "b", "final", "diverged", "trials")} for c in cells],
        "best_alpha": None if best is None else best["alpha"],
        "window_alphas": [c["alpha"] for c in window],
        "window_below_1e-4": bool(best is not None and all(c["final"] < 1e-4 for c in window)),
    }
    write_json(os.path.join(out, "summary.json"), summary)
    for c in cells:
        print(f"alpha={c['alpha']:g} m={c['m_inner']} b={c['b']}: final {c['final']:.4g}% "
              f"({c['diverged']}/{c['trials']} diverged)")
    return 0


def run_netflow(cfg, out):
    """All strategies on every (p_er, sigma) cell."""
    solver_kw = {"S": cfg["S"], "m_inner": cfg["m_inner"], "alpha": cfg["alpha"], "batch": cfg["batch"],
                 "eps_sub": cfg["eps_sub"]}
    mgd_kw = {"T": cfg["mgd_T"], "K": cfg["mgd_K"], "step_out": cfg["mgd_step_out"],
              "step_in": cfg["mgd_step_in"]}
    summary = {"command": "netflow", "config": cfg, "cells": []}
    mean_rows = []
    for p_er, sigma in cfg["cells"]:
        rows = netflow_cell(p_er, sigma, cfg["trials"], tuple(cfg["budget_fracs"]), cfg["seed"], cfg["n_nodes"],
                            cfg["M"], tuple(cfg["strategies"]), solver_kw, mgd_kw)
        tag = f"p{_tag(p_er)}_s{_tag(sigma)}"
        write_csv(os.path.join(out, f"trials_{tag}.csv"), TRIAL_COLUMNS, rows)
        summ = netflow_summary(rows)
        series = []
        for name in cfg["strategies"]:
            ys = [summ["mean_rho_by_budget"][name][b] for b in summ["budgets"]]
            series.append((name, summ["budgets"], ys))
            for b, v in zip(summ["budgets"], ys):
                mean_rows.append({"p_er": p_er, "sigma": sigma, "strategy": name, "budget": b, "mean_rho": v})
        write_svg(os.path.join(out, f"rho_{tag}.svg"), series, title=f"p_er={p_er:g}, sigma={sigma:g}",
                  xlabel="budget / r_t", ylabel="mean rho")
        summary["cells"].append({"p_er": p_er, "sigma": sigma, **summ})
        means = summ["mean_rho"]
        print(f"cell p_er={p_er:g} sigma={sigma:g}: " + ", ".join(f"{k} {v:.4f}" for k, v in means.items()))
    write_csv(os.path.join(out, "netflow_means.csv"), ("p_er", "sigma", "strategy", "budget", "mean_rho"),
              mean_rows)
    write_json(os.path.join(out, "summary.json"), summary)
    return 0


def run_rate(cfg, out):
    """Fitted versus theoretical contraction; exits 1 if any fitted ratio exceeds theory + gate."""
    if cfg["problem"]:
        prob = _load_problem(cfg["problem"])
    elif cfg["instance"] == "quadratic":
        prob = gen_quadratic(cfg["n"], cfg["m_dim"], cfg["q"], cfg["N"], cfg["instance_seed"])
    elif cfg["instance"] == "regression":
        prob = gen_regression(cfg["n"], cfg["m_dim"], cfg["q"], cfg["N"], seed=cfg["instance_seed"])
    else:
        raise ConfigError(f"rate: unknown instance {cfg['instance']!r}")
    ratio_rows, traj_rows, results = [], [], []
    failed = False
    for fac in cfg["alpha_factors"]:
        res = rate_study(prob, cfg["trials"], cfg["S"], cfg["m_inner"], cfg["batch"], alpha_factor=fac,
                         delta0=cfg["delta0"], delta_ratio=cfg["delta_ratio"], eps_floor=cfg["eps_floor"],
                         mode=cfg["mode"])
        ok = bool(res["fitted_ratio"] <= res["theoretical_ratio"] + cfg["gate"])
        failed |= not ok
        ratio_rows.append({"alpha": res["alpha"], "alpha_bound": res["alpha_bound"],
                           "fitted_ratio": res["fitted_ratio"], "theoretical_ratio": res["theoretical_ratio"],
                           "pass": ok})
        for s, (dp, dd) in enumerate(zip(res["dist_sq_primal"], res["dist_sq_dual"])):
            traj_rows.append({"alpha": res["alpha"], "s": s, "dist_sq_primal": dp, "dist_sq_dual": dd})
        results.append(res)
        print(f"alpha={res['alpha']:.4g} (bound {res['alpha_bound']:.4g}): fitted {res['fitted_ratio']:.4f} "
              f"vs theoretical {res['theoretical_ratio']:.4f} -> {'pass' if ok else 'FAIL'}")
    write_csv(os.path.join(out, "rate_ratios.csv"),
              ("alpha", "alpha_bound", "fitted_ratio", "theoretical_ratio", "pass"), ratio_rows)
    write_csv(os.path.join(out, "rate_trajectories.csv"), ("alpha", "s", "dist_sq_primal", "dist_sq_dual"),
              traj_rows)
    series = []
    for res in results:
        series.append((f"primal a={res['alpha']:.3g}", range(len(res["dist_sq_primal"])), res["dist_sq_primal"]))
        series.append((f"dual a={res['alpha']:.3g}", range(len(res["dist_sq_dual"])), res["dist_sq_dual"]))
    write_svg(os.path.join(out, "rate_trajectories.svg"), series, title="mean squared distance to the saddle point",
              xlabel="epoch s", ylabel="distance^2", logy=True)
    write_json(os.path.join(out, "summary.json"), {"command": "rate", "config": cfg, "ratios": ratio_rows,
                                                    "mu_min": results[0]["mu_min"] if results else None})
    return 1 if failed else 0


def run_proptest(cfg, out):
    """Randomized invariant suites; exits 1 on the first failure of any suite."""
    replay = cfg["replay"]
    if replay:
        ok, msg = run_case(replay["suite"], int(replay["case"]), cfg["seed"])
        print(f"replay {replay['suite']} case {replay['case']} seed {cfg['seed']}: {'pass' if ok else 'FAIL ' + msg}")
        return 0 if ok else 1
    rows = run_suites(cfg["trials"], cfg["seed"], cfg["suites"])
    write_csv(os.path.join(out, "proptest.csv"), ("suite", "cases", "failures", "first_failure_case", "message"),
              rows)
    write_json(os.path.join(out, "summary.json"), {"command": "proptest", "config": cfg, "suites": rows})
    failed = False
    for r in rows:
        if r["failures"]:
            failed = True
            print(f"FAIL {r['suite']}: {r['message']} (replay with --seed {cfg['seed']} "
                  f"--set 'replay={{\"suite\": \"{r['suite']}\", \"case\": {r['first_failure_case']}}}')")
        else:
            print(f"pass {r['suite']} ({r['cases']} cases)")
    return 1 if failed else 0


COMMANDS = {"regress": run_regress, "netflow": run_netflow, "rate": run_rate, "proptest": run_proptest}


def build_parser():
    ap = argparse.ArgumentParser(prog="minimax-spp", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON config (schema minimax-spp/1); defaults are used when omitted")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    ap.add_argument("--trials", type=int, help="number of trials / seeds / cases")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key; may be repeated")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config)
        cfg = apply_overrides(args.command, cfg, args.overrides)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        if args.trials is not None:
            if args.trials < 1:
                raise ConfigError("--trials must be positive")
            cfg["trials"] = args.trials
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"minimax-spp: error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    with warnings.catch_warnings(), np.errstate(over="ignore", invalid="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        return COMMANDS[args.command](cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
