"""Randomized invariant suites run by ``minimax-spp proptest``.

Case k of suite j draws its data from the stream (seed, 7, j, k), so any
failure can be replayed exactly from (seed, suite, case).
"""
import numpy as np

from .driver import project_onto_C
from .problem import ProblemSpec, QuadraticFamily
from .prox import BoxIndicator, ScaledL1, SquaredL2, Zero, moreau_envelope, moreau_identity_check
from .sampling import SamplerConfig, enumerate_batches, make_rng, variance_probe
from .ssn import SubproblemSpec, objective_I, residual_F

__all__ = ["SUITES", "random_regularizer", "random_problem", "run_case", "run_suites"]


def random_regularizer(rng, dim, kinds=("zero", "l1", "box", "sql2")):
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind == "zero":
        return Zero()
    if kind == "l1":
        return ScaledL1(float(rng.uniform(0.1, 2.0)))
    if kind == "sql2":
        return SquaredL2(float(rng.uniform(0.1, 2.0)))
    lo = -rng.uniform(0.2, 2.0, dim)
    hi = rng.uniform(0.2, 2.0, dim)
    return BoxIndicator(lo, hi)


def random_problem(rng, n=4, m_dim=3, q=2, N=5, phi=None, psi=None):
    """Small quadratic-bilinear instance with per-component curvatures."""
    def spd(d):
        G = rng.standard_normal((d, d))
        return G @ G.T / d + rng.uniform(0.5, 1.5) * np.eye(d)

    P = np.stack([spd(n) for _ in range(N)])
    Q = np.stack([spd(m_dim) for _ in range(N)])
    K = 0.5 * rng.standard_normal((N, m_dim, n))
    fam = QuadraticFamily(P, rng.standard_normal((N, n)), Q, rng.standard_normal((N, m_dim)), K)
    A = rng.standard_normal((q, n))
    B = rng.standard_normal((q, m_dim))
    return ProblemSpec(fam, A, B, rng.standard_normal(q), phi=phi or Zero(), psi=psi or Zero())


def _prox_moreau(rng):
    dim = int(rng.integers(1, 9))
    r = random_regularizer(rng, dim)
    alpha = float(10 ** rng.uniform(-2, 1))
    v = 3.0 * rng.standard_normal(dim)
    err = moreau_identity_check(r, alpha, v)
    return err <= 1e-10 * (1.0 + np.linalg.norm(v)), f"moreau identity error {err:.3e} for {r!r}"


def _prox_nonexpansive(rng):
    dim = int(rng.integers(1, 9))
    r = random_regularizer(rng, dim)
    alpha = float(10 ** rng.uniform(-2, 1))
    u, v = 3.0 * rng.standard_normal((2, dim))
    lhs = np.linalg.norm(r.prox(alpha, u) - r.prox(alpha, v))
    rhs = np.linalg.norm(u - v)
    return lhs <= rhs * (1 + 1e-12) + 1e-15, f"prox expanded distance {lhs:.6e} > {rhs:.6e} for {r!r}"


def _envelope_gradient(rng):
    dim = int(rng.integers(1, 6))
    r = random_regularizer(rng, dim)
    alpha = float(10 ** rng.uniform(-1, 0.5))
    v = 3.0 * rng.standard_normal(dim)
    g = (v - r.prox(alpha, v)) / alpha
    h = 1e-6
    fd = np.array([(moreau_envelope(r, alpha, v + h * e) - moreau_envelope(r, alpha, v - h * e)) / (2 * h)
                   for e in np.eye(dim)])
    err = np.linalg.norm(fd - g)
    return err <= 1e-5 * (1.0 + np.linalg.norm(g)), f"envelope gradient error {err:.3e} for {r!r}"


def _unbiased_enumeration(rng):
    p = random_problem(rng, N=4)
    mode = ("with", "without")[int(rng.integers(2))]
    b = int(rng.integers(1, 4))
    x, y, xr, yr = (rng.standard_normal(d) for d in (p.n, p.m_dim, p.n, p.m_dim))
    gx_full, gy_full = p.batch_gradients(np.arange(p.N), x, y)
    rx_full, ry_full = p.batch_gradients(np.arange(p.N), xr, yr)
    est_x, est_y, count = np.zeros(p.n), np.zeros(p.m_dim), 0
    for S in enumerate_batches(mode, p.N, b):
        gx, gy = p.batch_gradients(S, x, y)
        rx, ry = p.batch_gradients(S, xr, yr)
        est_x += gx - rx + rx_full
        est_y += gy - ry + ry_full
        count += 1
    err = max(np.abs(est_x / count - gx_full).max(), np.abs(est_y / count - gy_full).max())
    return err <= 1e-13 * (1.0 + np.abs(gx_full).max() + np.abs(gy_full).max()), \
        f"estimator mean off by {err:.3e} (mode={mode}, b={b})"


def _potential_gradient(rng):
    n, m = 4, 3
    p = random_problem(rng, n, m, 2, 6, phi=random_regularizer(rng, n), psi=random_regularizer(rng, m))
    block = ("X", "Y")[int(rng.integers(2))]
    dim = n if block == "X" else m
    b = int(rng.integers(1, 4))
    batch = rng.integers(0, p.N, b)
    other = rng.standard_normal(m if block == "X" else n)
    spec = SubproblemSpec(p, block, rng.standard_normal(dim), other, float(10 ** rng.uniform(-1, 0.5)), batch,
                          0.1 * rng.standard_normal(dim))
    xi = rng.standard_normal((b, dim))
    F = residual_F(xi, spec)
    h = 1e-6
    fd = np.zeros_like(xi)
    for i in range(b):
        for j in range(dim):
            e = np.zeros_like(xi)
            e[i, j] = h
            fd[i, j] = (objective_I(xi + e, spec) - objective_I(xi - e, spec)) / (2 * h)
    err = np.linalg.norm(fd - F) / max(np.linalg.norm(F), 1.0)
    return err <= 1e-6, f"grad I vs F relative error {err:.3e} (block {block})"


def _variance_bound(rng):
    p = random_problem(rng, 3, 3, 2, 20)
    mode = ("with", "without")[int(rng.integers(2))]
    b = int(rng.integers(1, 8))
    cfg = SamplerConfig(mode, b, int(rng.integers(2 ** 31)))
    x, y, xr, yr = (rng.standard_normal(d) for d in (p.n, p.m_dim, p.n, p.m_dim))
    res = variance_probe(p, cfg, x, y, xr, yr, trials=200)
    ok = res["empirical_x"] <= res["bound_x"] * (1 + 1e-9) and res["empirical_y"] <= res["bound_y"] * (1 + 1e-9)
    return ok, (f"variance {res['empirical_x']:.3e}/{res['empirical_y']:.3e} above bound "
                f"{res['bound_x']:.3e}/{res['bound_y']:.3e} (mode={mode}, b={b})")


def _projection(rng):
    p = random_problem(rng, int(rng.integers(2, 6)), int(rng.integers(2, 6)), int(rng.integers(1, 3)), 2)
    x, y = 3.0 * rng.standard_normal(p.n), 3.0 * rng.standard_normal(p.m_dim)
    xp, yp, _ = project_onto_C(p, x, y)
    scale = 1.0 + np.linalg.norm(x) + np.linalg.norm(y) + np.linalg.norm(p.c)
    feas = np.linalg.norm(p.residual(xp, yp))
    xpp, ypp, _ = project_onto_C(p, xp, yp)
    idem = np.linalg.norm(np.concatenate([xpp - xp, ypp - yp]))
    # a feasible competitor: project a random point
    xf, yf, _ = project_onto_C(p, xp + rng.standard_normal(p.n), yp + rng.standard_normal(p.m_dim))
    d_proj = np.linalg.norm(np.concatenate([x - xp, y - yp]))
    d_comp = np.linalg.norm(np.concatenate([x - xf, y - yf]))
    ok = feas <= 1e-10 * scale and idem <= 1e-12 * scale and d_proj <= d_comp * (1 + 1e-12) + 1e-12
    return ok, f"projection: residual {feas:.3e}, idempotence {idem:.3e}, dist {d_proj:.6e} vs {d_comp:.6e}"


SUITES = {
    "prox_moreau_identity": _prox_moreau,
    "prox_nonexpansive": _prox_nonexpansive,
    "envelope_gradient": _envelope_gradient,
    "unbiased_enumeration": _unbiased_enumeration,
    "potential_gradient": _potential_gradient,
    "variance_bound": _variance_bound,
    "projection": _projection,
}


def run_case(suite, case, seed=0):
    """Run one case; returns ``(ok, message)``."""
    j = list(SUITES).index(suite)
    rng = make_rng(seed, 7, j, case)
    ok, msg = SUITES[suite](rng)
    return bool(ok), msg


def run_suites(trials=1000, seed=0, suites=None):
    """Run every selected suite; stops a suite at its first failure.

    Returns one dict per suite with keys suite, cases, failures,
    first_failure_case and message.
    """
    names = list(SUITES) if suites is None else list(suites)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise ValueError(f"unknown suites {unknown}")
    out = []
    for name in names:
        row = {"suite": name, "cases": 0, "failures": 0, "first_failure_case": -1, "message": ""}
        for k in range(trials):
            ok, msg = run_case(name, k, seed)
            row["cases"] += 1
            if not ok:
                row.update(failures=1, first_failure_case=k, message=msg)
                break
        out.append(row)
    return out
