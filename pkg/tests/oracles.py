"""Independent reference computations used by several test modules."""
import numpy as np

from minimax_spp.prox import SquaredL2, Zero

# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def _mean(a, idx, shape):
    a = np.asarray(a)
    return a[idx].mean(axis=0) if a.ndim == len(shape) + 1 else a


def implicit_step_dense(p, x, y, lam, alpha, batch=None, vx=None, vy=None):
    """One Y-then-X implicit proximal step with the multiplier update, by dense linear solves.

    Valid for quadratic-bilinear components and phi, psi in {Zero, SquaredL2}.
    ``vx``, ``vy`` are the SVRG control variates (zero when omitted).
    """
    fam = p.family
    idx = np.arange(p.N) if batch is None else np.sort(np.asarray(batch))
    n, m = p.n, p.m_dim
    P = _mean(fam.P, idx, (n, n))
    Q = _mean(fam.Q, idx, (m, m))
    pv = _mean(fam.p, idx, (n,))
    qv = _mean(fam.q, idx, (m,))
    K = fam.K[idx].mean(axis=0)
    vx = np.zeros(n) if vx is None else vx
    vy = np.zeros(m) if vy is None else vy

    def w(r):
        if isinstance(r, Zero):
            return 0.0
        assert isinstance(r, SquaredL2)
        return r.weight

    wy, wx = w(p.psi), w(p.phi)
    # y+ = argmin psi(y) + h_S(y) - f_S(x, y) - <v_y + B'lam, y> + ||y - y_k||^2 / (2 alpha)
    y1 = np.linalg.solve((1 + alpha * wy) * np.eye(m) + alpha * Q, y - alpha * (qv - K @ x) + alpha * (vy + p.B.T @ lam))
    # x+ = argmin phi(x) + g_S(x) + f_S(x, y+) + <v_x + A'lam, x> + ||x - x_k||^2 / (2 alpha)
    x1 = np.linalg.solve((1 + alpha * wx) * np.eye(n) + alpha * P, x - alpha * (pv + K.T @ y1) - alpha * (vx + p.A.T @ lam))
    lam1 = lam - alpha * (p.A @ x1 + p.B @ y1 + p.c)
    return x1, y1, lam1


def box_qp(M, g, lo, hi):
    """argmin 0.5 x'Mx + g'x over lo <= x <= hi (M symmetric positive definite).

    Bounded-variable least squares on the Cholesky form, then an exact solve
    on the free coordinates of the returned active set.
    """
    from scipy.optimize import lsq_linear

    L = np.linalg.cholesky(M)
    # 0.5 x'Mx + g'x = 0.5 ||L'x + L^{-1} g||^2 + const
    d = -np.linalg.solve(L, g)
    x = lsq_linear(L.T, d, bounds=(lo, hi), method="bvls", tol=1e-15).x
    at_lo = np.isclose(x, lo, rtol=0, atol=1e-9)
    at_hi = np.isclose(x, hi, rtol=0, atol=1e-9)
    x = np.where(at_lo, lo, np.where(at_hi, hi, x))
    free = ~(at_lo | at_hi)
    if free.any():
        rhs = -g[free] - M[np.ix_(free, ~free)] @ x[~free]
        x[free] = np.linalg.solve(M[np.ix_(free, free)], rhs)
    return x


def exact_block_solution(spec):
    """Exact x+ and xi-hat of an X-block subproblem with affine gradients and a box (or no) regularizer."""
    from minimax_spp.prox import BoxIndicator

    p, batch, y = spec.problem, spec.batch, spec.other_point
    n = p.n
    g0 = p.grad_x_rows(batch, np.zeros(n), y).mean(axis=0)
    M = np.stack([p.grad_x_rows(batch, e, y).mean(axis=0) - g0 for e in np.eye(n)], axis=1)
    M = 0.5 * (M + M.T) + np.eye(n) / spec.alpha
    g = g0 - (spec.anchor - spec.drift) / spec.alpha
    r = p.phi
    if isinstance(r, BoxIndicator):
        x = box_qp(M, g, np.broadcast_to(r.lo, (n,)), np.broadcast_to(r.hi, (n,)))
    else:
        assert isinstance(r, Zero)
        x = np.linalg.solve(M, -g)
    return x, p.grad_x_rows(batch, x, y)
