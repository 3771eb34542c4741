"""Outer/inner loops of the variance-reduced stochastic proximal point method.

Each epoch s fixes a reference point (x_ref, y_ref) with cached full
gradients and runs ``m_inner`` steps. A step draws a batch, builds the SVRG
drifts, solves the Y subproblem at the frozen x^k, then the X subproblem at
the new y, and finally moves the multiplier,

    lambda <- lambda - alpha (A x + B y + c).

The reference for the next epoch is the last inner iterate.
"""
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .problem import IterateState, full_gradients, kkt_residual, natural_residual
from .sampling import SamplerConfig, draw_batch, variance_correction
from .ssn import SSNParams, SubproblemError, SubproblemSpec, recover_primal, solve_subproblem

__all__ = [
    "SolverConfig",
    "RunReport",
    "DivergenceError",
    "RankDeficiencyError",
    "theoretical_alpha_bound",
    "theoretical_ratio",
    "tolerance_schedule",
    "inner_step",
    "outer_loop",
    "project_onto_C",
    "fit_contraction",
    "contraction_estimate",
    "REPORT_COLUMNS",
    "NEWTON_COLUMNS",
]

REPORT_COLUMNS = ("s", "dist_sq_primal", "dist_sq_dual", "constraint_violation",
                  "kkt_residual", "mean_newton_iters", "wall_ms")
NEWTON_COLUMNS = ("s", "k", "block", "iter", "f_norm", "step", "cg_iters", "eta")


class DivergenceError(RuntimeError):
    """A non-finite iterate appeared; ``report`` holds the rows up to the last finite epoch."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


@dataclass
class SolverConfig:
    """Parameters of a run.

    The subproblem tolerance schedule uses delta_s = delta0 * delta_ratio**s
    (constant when ``delta_ratio`` is 1); ``delta0 = 0`` means every
    subproblem is solved to ``eps_floor``. A run is declared divergent when
    the KKT residual exceeds ``divergence_ratio`` times its initial value
    (``None`` disables the check).
    """

    S: int = 30
    m_inner: int = 5
    alpha: float = 0.1
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    delta0: float = 0.0
    delta_ratio: float = 1.0
    eps_floor: float = 1e-10
    project_each_outer: bool = False
    ssn: SSNParams = field(default_factory=SSNParams)
    log_newton: bool = False
    divergence_ratio: float = 1e12

    def __post_init__(self):
        if self.S < 1 or self.m_inner < 1:
            raise ValueError("S and m_inner must be at least 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.delta0 < 0 or not 0 <= self.delta_ratio <= 1:
            raise ValueError("delta schedule must be nonnegative and nonincreasing")
        if not self.eps_floor > 0:
            raise ValueError("eps_floor must be positive")

    def delta(self, s):
        return self.delta0 * self.delta_ratio ** s


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    newton_rows: list = field(default_factory=list)
    alpha: float = 0.0
    alpha_bound: float = 0.0
    fitted_ratio: float = float("nan")
    theoretical_ratio: float = float("nan")
    lam_sq: list = field(default_factory=list)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)


def theoretical_alpha_bound(p, m_inner, b):
    """Largest constant step covered by the linear-rate theorem."""
    Lx, Ly = p.L_phi_x, p.L_phi_y
    mm = m_inner * (m_inner - 1)

    def term(La, Lb):
        return 1.0 / (La + np.sqrt(2 * mm) * La / np.sqrt(b) + np.sqrt(mm) * Lb / np.sqrt(2 * b))

    return float(min(term(Ly, Lx), term(Lx, Ly)))


def theoretical_ratio(alpha, mu_min):
    """1 - 2 alpha mu / (1 + 2 alpha mu)."""
    t = 2.0 * alpha * mu_min
    return 1.0 - t / (1.0 + t)


def tolerance_schedule(p, s, x_ref, y_ref, delta_s, eps_floor, lam_ref=None, grads=None):
    """max(eps_floor, delta_s * min(||F_nat^x(x_ref)||, ||F_nat^y(y_ref)||))."""
    if delta_s < 0:
        raise ValueError("delta_s must be nonnegative")
    if delta_s == 0:
        return float(eps_floor)
    lam = np.zeros(p.q) if lam_ref is None else lam_ref
    grads = full_gradients(p, x_ref, y_ref) if grads is None else grads
    rx = np.linalg.norm(natural_residual(p, "X", x_ref, y_ref, lam, 1.0, grads))
    ry = np.linalg.norm(natural_residual(p, "Y", x_ref, y_ref, lam, 1.0, grads))
    return float(max(eps_floor, delta_s * min(rx, ry)))


def inner_step(state, p, cfg, s, k, eps=None, newton_log=None):
    """One inner iteration; returns the new state (the input is not modified)."""
    eps = cfg.eps_floor if eps is None else eps
    alpha = cfg.alpha
    batch = draw_batch(cfg.sampler, p.N, (s, k))
    vc = variance_correction(p, batch, state, alpha)
    new = state.copy()
    iters = []
    for block in ("Y", "X"):
        if block == "Y":
            spec = SubproblemSpec(p, "Y", state.y, state.x, alpha, batch, vc.hat_v_y, eps, cfg.ssn)
        else:
            spec = SubproblemSpec(p, "X", state.x, new.y, alpha, batch, vc.hat_v_x, eps, cfg.ssn)
        try:
            xi, rep = solve_subproblem(spec)
        except SubproblemError as exc:
            raise SubproblemError(f"(s={s}, k={k}, block={block}) {exc}", exc.report) from exc
        iters.append(rep.iterations)
        if newton_log is not None:
            for h in rep.history:
                newton_log.append({"s": s, "k": k, "block": block, **{c: h[c] for c in NEWTON_COLUMNS[3:]}})
        if block == "Y":
            new.y = recover_primal(xi, spec)
        else:
            new.x = recover_primal(xi, spec)
    new.lam = state.lam - alpha * (p.A @ new.x + p.B @ new.y + p.c)
    new.last_newton_iters = iters
    return new


def project_onto_C(p, x, y):
    """Euclidean projection of (x, y) onto {A x + B y + c = 0}.

    Returns ``(x', y', zeta)`` with zeta = (AA' + BB')^{-1}(Ax + By + c).
    The factorization is cached on the problem.
    """
    if p.q == 0:
        return np.array(x, dtype=float), np.array(y, dtype=float), np.zeros(0)
    if p._proj_factor is None:
        G = p.A @ p.A.T + p.B @ p.B.T
        ev = np.linalg.eigvalsh(G)
        if ev[0] <= 1e-12 * max(ev[-1], 1.0):
            raise RankDeficiencyError(
                "[A B] is not of full row rank; the projection onto the constraint set is not unique"
            )
        p._proj_factor = sla.cho_factor(G)
    r = p.A @ x + p.B @ y + p.c
    zeta = sla.cho_solve(p._proj_factor, r)
    xp = x - p.A.T @ zeta
    yp = y - p.B.T @ zeta
    # one refinement pass for feasibility at the 1e-12 level
    r2 = p.A @ xp + p.B @ yp + p.c
    z2 = sla.cho_solve(p._proj_factor, r2)
    return xp - p.A.T @ z2, yp - p.B.T @ z2, zeta + z2


def _metrics(p, st, reference):
    # called right after refresh_reference, so the cache holds the gradients at (x, y)
    grads = (st.cache.gx, st.cache.gy) if st.cache is not None and st.cache.matches(st.x, st.y) else None
    row = {
        "constraint_violation": float(np.linalg.norm(p.residual(st.x, st.y))),
        "kkt_residual": kkt_residual(p, st.x, st.y, st.lam, grads),
    }
    if reference is not None:
        row["dist_sq_primal"] = float(np.sum((st.x - reference.x_star) ** 2) + np.sum((st.y - reference.y_star) ** 2))
        row["dist_sq_dual"] = float(np.sum((st.lam - reference.lambda_star) ** 2))
    else:
        row["dist_sq_primal"] = float("nan")
        row["dist_sq_dual"] = float("nan")
    return row


def outer_loop(p, cfg, x0=None, y0=None, lam0=None, reference=None):
    """Run S epochs of m_inner steps; returns ``(state, RunReport)``.

    Row 0 of the report describes the starting point; row s the reference
    after epoch s. With ``cfg.project_each_outer`` the new reference is
    projected onto the constraint set.
    """
    x = np.zeros(p.n) if x0 is None else np.array(x0, dtype=float)
    y = np.zeros(p.m_dim) if y0 is None else np.array(y0, dtype=float)
    lam = np.zeros(p.q) if lam0 is None else np.array(lam0, dtype=float)
    b = cfg.sampler.batch_size
    cfg.sampler.validate(p.N)
    report = RunReport(alpha=cfg.alpha, alpha_bound=theoretical_alpha_bound(p, cfg.m_inner, b))
    if cfg.alpha > report.alpha_bound:
        warnings.warn(
            f"alpha={cfg.alpha:.4g} exceeds the theoretical bound {report.alpha_bound:.4g}",
            RuntimeWarning, stacklevel=2,
        )
    state = IterateState(x, y, lam)
    state.refresh_reference(p)
    row = {"s": 0, **_metrics(p, state, reference), "mean_newton_iters": 0.0, "wall_ms": 0.0}
    report.rows.append(row)
    newton_log = report.newton_rows if cfg.log_newton else None
    for s in range(cfg.S):
        t0 = time.perf_counter()
        eps = tolerance_schedule(p, s, state.x_ref, state.y_ref, cfg.delta(s), cfg.eps_floor, state.lam_ref,
                                 (state.cache.gx, state.cache.gy))
        iters = []
        for k in range(cfg.m_inner):
            state = inner_step(state, p, cfg, s, k, eps, newton_log)
            iters.extend(state.last_newton_iters)
            if not (np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.y)) and np.all(np.isfinite(state.lam))):
                raise DivergenceError(f"non-finite iterate at s={s}, k={k}", report)
        if cfg.project_each_outer:
            state.x, state.y, _ = project_onto_C(p, state.x, state.y)
        state.refresh_reference(p)
        wall = (time.perf_counter() - t0) * 1e3
        row = {"s": s + 1, **_metrics(p, state, reference), "mean_newton_iters": float(np.mean(iters)),
               "wall_ms": wall}
        if not all(np.isfinite(v) for k_, v in row.items() if k_ not in ("dist_sq_primal", "dist_sq_dual")):
            raise DivergenceError(f"non-finite metrics after epoch {s}", report)
        kkt0 = report.rows[0]["kkt_residual"]
        if cfg.divergence_ratio is not None and row["kkt_residual"] > cfg.divergence_ratio * max(kkt0, 1e-300):
            report.rows.append(row)
            raise DivergenceError(f"KKT residual grew by more than {cfg.divergence_ratio:g} after epoch {s}",
                                  report)
        report.rows.append(row)
    if reference is not None:
        fitted, theo = contraction_estimate(report, p)
        report.fitted_ratio, report.theoretical_ratio = fitted, theo
    return state, report


def fit_contraction(dists, floor=1e-24):
    """Geometric-mean ratio of successive values over the tail half.

    The window stops at the first value at or below ``floor``.
    """
    d = np.asarray(dists, dtype=float)
    cut = np.nonzero(d <= floor)[0]
    if cut.size:
        d = d[: cut[0]]
    if d.size < 2:
        return float("nan")
    start = d.size // 2 if d.size >= 4 else 0
    tail = d[start:]
    if tail.size < 2:
        return float("nan")
    return float((tail[-1] / tail[0]) ** (1.0 / (tail.size - 1)))


def contraction_estimate(report, p, dists=None):
    """(fitted_ratio, theoretical_ratio) for a run (or for given mean distances)."""
    if dists is None:
        dists = report.column("dist_sq_primal")
    mu_min = min(p.mu_x, p.mu_y)
    return fit_contraction(dists), theoretical_ratio(report.alpha, mu_min)
