"""Pure-Python reference kernels.

These define the semantics of every hot kernel; ``_ckernels.pyx`` must agree
with them to rounding.
"""
from collections import deque

import numpy as np


def max_flow_dense(cap, s, t, tol=1e-9):
    """Edmonds-Karp max flow on a dense capacity matrix.

    Returns ``(value, flow)`` where ``flow[i, j]`` is the net flow on arc i->j
    (only nonnegative entries are meaningful for arcs present in ``cap``).
    Residual capacities at or below ``tol`` count as saturated.
    """
    cap = np.asarray(cap, dtype=float)
    n = cap.shape[0]
    residual = cap.copy()
    value = 0.0
    if s == t:
        return 0.0, np.zeros_like(cap)
    while True:
        parent = [-1] * n
        parent[s] = s
        queue = deque([s])
        while queue and parent[t] == -1:
            u = queue.popleft()
            row = residual[u]
            for v in range(n):
                if parent[v] == -1 and row[v] > tol:
                    parent[v] = u
                    queue.append(v)
        if parent[t] == -1:
            break
        push = np.inf
        v = t
        while v != s:
            u = parent[v]
            push = min(push, residual[u, v])
            v = u
        v = t
        while v != s:
            u = parent[v]
            residual[u, v] -= push
            residual[v, u] += push
            v = u
        value += push
    flow = np.maximum(cap - residual, 0.0)
    return value, flow


def capped_simplex_projection(v, lo, hi, total, tol=1e-13, max_iter=200):
    """Euclidean projection of ``v`` onto ``{lo <= y <= hi, sum(y) = total}``.

    Finds the shift ``tau`` with ``sum(clip(v - tau, lo, hi)) = total`` by
    bisection, then polishes with one exact step on the free coordinates.
    Raises ValueError when the set is empty.
    """
    v = np.asarray(v, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), v.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), v.shape)
    slack = 1e-12 * (1.0 + abs(total))
    if lo.sum() > total + slack or hi.sum() < total - slack:
        raise ValueError("capped simplex is empty for the requested total")
    a = float(np.min(v - hi)) - 1.0
    b = float(np.max(v - lo)) + 1.0
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        s = np.clip(v - mid, lo, hi).sum()
        if s > total:
            a = mid
        else:
            b = mid
        if b - a <= tol * (1.0 + abs(mid)):
            break
    tau = 0.5 * (a + b)
    y = np.clip(v - tau, lo, hi)
    free = (v - tau > lo) & (v - tau < hi)
    k = int(free.sum())
    if k:
        gap = total - y.sum()
        y[free] = np.clip(y[free] + gap / k, lo[free], hi[free])
    return y


def _sm_apply(h, u, coef, eta, r):
    # exact inverse of diag(h + eta) + coef * (1 1^T kron diag(u)), one coordinate column at a time
    dinv = 1.0 / (h + eta)
    w = r * dinv
    c = coef * u
    num = c * w.sum(axis=0)
    den = 1.0 + c * dinv.sum(axis=0)
    return w - dinv * (num / den)


def diag_structured_pcg(h, u, coef, eta, rhs, tol, maxiter):
    """Preconditioned CG on ``(W + eta I) d = rhs`` with diagonal blocks.

    ``W`` acts on a ``(b, dim)`` array as ``h * d + coef * u * d.sum(0)``.
    The preconditioner is the per-coordinate Sherman-Morrison inverse, exact
    for this structure, so convergence normally takes one or two steps.
    Returns ``(d, iterations, residual_norm)``; the stopping test uses the
    true residual norm.
    """
    h = np.asarray(h, dtype=float)
    rhs = np.asarray(rhs, dtype=float)

    def apply(d):
        return (h + eta) * d + coef * u * d.sum(axis=0)

    x = np.zeros_like(rhs)
    r = rhs.copy()
    rnorm = float(np.sqrt(np.sum(r * r)))
    if rnorm <= tol:
        return x, 0, rnorm
    z = _sm_apply(h, u, coef, eta, r)
    p = z.copy()
    rz = float(np.sum(r * z))
    it = 0
    while it < maxiter:
        it += 1
        q = apply(p)
        pq = float(np.sum(p * q))
        if not pq > 0.0:
            break
        step = rz / pq
        x += step * p
        r -= step * q
        rnorm = float(np.sqrt(np.sum(r * r)))
        if rnorm <= tol:
            break
        if it % 8 == 0:
            # refresh the recursive residual to avoid drift
            r = rhs - apply(x)
            rnorm = float(np.sqrt(np.sum(r * r)))
            if rnorm <= tol:
                break
        z = _sm_apply(h, u, coef, eta, r)
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    r = rhs - apply(x)
    return x, it, float(np.sqrt(np.sum(r * r)))


def ordered_row_mean(rows):
    """Mean over axis 0 with rows added strictly in index order.

    ``cumsum`` fixes the summation order, so the result is bitwise
    reproducible and matches the compiled kernel.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.shape[0] == 0:
        raise ValueError("empty batch")
    return np.cumsum(rows, axis=0)[-1] / rows.shape[0]
