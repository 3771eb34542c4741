# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()


def max_flow_dense(cap, Py_ssize_t s, Py_ssize_t t, double tol=1e-9):
    cdef cnp.ndarray[double, ndim=2] capm = np.ascontiguousarray(cap, dtype=np.float64)
    cdef Py_ssize_t n = capm.shape[0]
    if s == t:
        return 0.0, np.zeros_like(capm)
    cdef double[:, ::1] res = capm.copy()
    cdef Py_ssize_t[::1] parent = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] queue = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t head, tail, u, v
    cdef double push, value = 0.0
    while True:
        for v in range(n):
            parent[v] = -1
        parent[s] = s
        head = 0
        tail = 0
        queue[tail] = s
        tail += 1
        while head < tail and parent[t] == -1:
            u = queue[head]
            head += 1
            for v in range(n):
                if parent[v] == -1 and res[u, v] > tol:
                    parent[v] = u
                    queue[tail] = v
                    tail += 1
        if parent[t] == -1:
            break
        push = INFINITY
        v = t
        while v != s:
            u = parent[v]
            if res[u, v] < push:
                push = res[u, v]
            v = u
        v = t
        while v != s:
            u = parent[v]
            res[u, v] -= push
            res[v, u] += push
            v = u
        value += push
    flow = np.maximum(capm - np.asarray(res), 0.0)
    return value, flow


cdef double _clip_sum(double[::1] v, double[::1] lo, double[::1] hi, double tau) nogil:
    cdef Py_ssize_t j
    cdef double acc = 0.0, z
    for j in range(v.shape[0]):
        z = v[j] - tau
        if z < lo[j]:
            z = lo[j]
        elif z > hi[j]:
            z = hi[j]
        acc += z
    return acc


def capped_simplex_projection(v, lo, hi, double total, double tol=1e-13, int max_iter=200):
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = vv.shape[0]
    cdef double[::1] lov = np.array(np.broadcast_to(np.asarray(lo, dtype=np.float64), (n,)), dtype=np.float64)
    cdef double[::1] hiv = np.array(np.broadcast_to(np.asarray(hi, dtype=np.float64), (n,)), dtype=np.float64)
    cdef double slo = 0.0, shi = 0.0, a, b, mid, tau, gap, z
    cdef Py_ssize_t j, k = 0
    cdef int it
    for j in range(n):
        slo += lov[j]
        shi += hiv[j]
    cdef double slack = 1e-12 * (1.0 + fabs(total))
    if slo > total + slack or shi < total - slack:
        raise ValueError("capped simplex is empty for the requested total")
    a = INFINITY
    b = -INFINITY
    for j in range(n):
        if vv[j] - hiv[j] < a:
            a = vv[j] - hiv[j]
        if vv[j] - lov[j] > b:
            b = vv[j] - lov[j]
    a -= 1.0
    b += 1.0
    for it in range(max_iter):
        mid = 0.5 * (a + b)
        if _clip_sum(vv, lov, hiv, mid) > total:
            a = mid
        else:
            b = mid
        if b - a <= tol * (1.0 + fabs(mid)):
            break
    tau = 0.5 * (a + b)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double acc = 0.0
    for j in range(n):
        z = vv[j] - tau
        if z > lov[j] and z < hiv[j]:
            k += 1
        if z < lov[j]:
            z = lov[j]
        elif z > hiv[j]:
            z = hiv[j]
        y[j] = z
        acc += z
    if k:
        gap = (total - acc) / k
        for j in range(n):
            z = vv[j] - tau
            if z > lov[j] and z < hiv[j]:
                z = y[j] + gap
                if z < lov[j]:
                    z = lov[j]
                elif z > hiv[j]:
                    z = hiv[j]
                y[j] = z
    return out


cdef void _apply(double[:, ::1] h, double[::1] u, double coef, double eta,
                 double[:, ::1] d, double[::1] colsum, double[:, ::1] out) nogil:
    cdef Py_ssize_t b = h.shape[0], n = h.shape[1], i, j
    for j in range(n):
        colsum[j] = 0.0
    for i in range(b):
        for j in range(n):
            colsum[j] += d[i, j]
    for i in range(b):
        for j in range(n):
            out[i, j] = (h[i, j] + eta) * d[i, j] + coef * u[j] * colsum[j]


cdef void _precond(double[:, ::1] h, double[::1] u, double coef, double eta,
                   double[:, ::1] r, double[::1] ws, double[::1] ds, double[:, ::1] out) nogil:
    cdef Py_ssize_t b = h.shape[0], n = h.shape[1], i, j
    cdef double dinv, c
    for j in range(n):
        ws[j] = 0.0
        ds[j] = 0.0
    for i in range(b):
        for j in range(n):
            dinv = 1.0 / (h[i, j] + eta)
            out[i, j] = r[i, j] * dinv
            ws[j] += out[i, j]
            ds[j] += dinv
    for j in range(n):
        c = coef * u[j]
        ws[j] = c * ws[j] / (1.0 + c * ds[j])
    for i in range(b):
        for j in range(n):
            out[i, j] -= ws[j] / (h[i, j] + eta)


cdef double _dot(double[:, ::1] a, double[:, ::1] b) nogil:
    cdef Py_ssize_t i, j
    cdef double acc = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            acc += a[i, j] * b[i, j]
    return acc


def diag_structured_pcg(h, u, double coef, double eta, rhs, double tol, int maxiter):
    cdef double[:, ::1] hh = np.ascontiguousarray(h, dtype=np.float64)
    cdef double[:, ::1] rr = np.ascontiguousarray(rhs, dtype=np.float64)
    cdef Py_ssize_t b = rr.shape[0], n = rr.shape[1], i, j
    cdef double[::1] uu = np.array(np.broadcast_to(np.asarray(u, dtype=np.float64), (n,)), dtype=np.float64)
    xo = np.zeros((b, n))
    cdef double[:, ::1] x = xo
    cdef double[:, ::1] r = np.array(rr, copy=True)
    cdef double[:, ::1] z = np.empty((b, n))
    cdef double[:, ::1] p = np.empty((b, n))
    cdef double[:, ::1] q = np.empty((b, n))
    cdef double[::1] w1 = np.empty(n)
    cdef double[::1] w2 = np.empty(n)
    cdef double rnorm, rz, rz_new, pq, step, beta
    cdef int it = 0
    rnorm = sqrt(_dot(r, r))
    if rnorm <= tol:
        return xo, 0, rnorm
    _precond(hh, uu, coef, eta, r, w1, w2, z)
    p[:, :] = z
    rz = _dot(r, z)
    while it < maxiter:
        it += 1
        _apply(hh, uu, coef, eta, p, w1, q)
        pq = _dot(p, q)
        if not pq > 0.0:
            break
        step = rz / pq
        for i in range(b):
            for j in range(n):
                x[i, j] += step * p[i, j]
                r[i, j] -= step * q[i, j]
        rnorm = sqrt(_dot(r, r))
        if rnorm <= tol:
            break
        if it % 8 == 0:
            _apply(hh, uu, coef, eta, x, w1, q)
            for i in range(b):
                for j in range(n):
                    r[i, j] = rr[i, j] - q[i, j]
            rnorm = sqrt(_dot(r, r))
            if rnorm <= tol:
                break
        _precond(hh, uu, coef, eta, r, w1, w2, z)
        rz_new = _dot(r, z)
        beta = rz_new / rz
        for i in range(b):
            for j in range(n):
                p[i, j] = z[i, j] + beta * p[i, j]
        rz = rz_new
    _apply(hh, uu, coef, eta, x, w1, q)
    for i in range(b):
        for j in range(n):
            q[i, j] = rr[i, j] - q[i, j]
    return xo, it, sqrt(_dot(q, q))


def ordered_row_mean(rows):
    cdef double[:, ::1] r = np.ascontiguousarray(rows, dtype=np.float64)
    cdef Py_ssize_t b = r.shape[0], n = r.shape[1], i, j
    if b == 0:
        raise ValueError("empty batch")
    out = np.zeros(n)
    cdef double[::1] acc = out
    for i in range(b):
        for j in range(n):
            acc[j] += r[i, j]
    for j in range(n):
        acc[j] /= b
    return out
