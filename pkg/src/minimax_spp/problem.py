"""Constrained finite-sum minimax problems.

A problem is

    min_x max_y  phi(x) + g(x) + f(x, y) - h(y) - psi(y)   s.t.  A x + B y + c = 0

with ``g, h, f`` averages of N components. Components are stored as a batched
*family* so that minibatch oracles are single array operations. Two quadratic
families ship with the package:

``QuadraticFamily``
    g_i(x) = x'P_i x / 2 + p_i'x,  h_i(y) = y'Q_i y / 2 + q_i'y,  f_i = y'K_i x
    with dense P, Q, K (P and Q may be shared by all components).
``DiagonalQuadraticFamily``
    the same with diagonal P_i, Q_i and a diagonal coupling K_i that pairs
    y_e with one coordinate of x (``couple[e]``).

The per-component gradients used by the solver are

    gx_i = grad g_i(x) + grad_x f_i(x, y)     (gradient of phi^x_{y,i})
    gy_i = grad h_i(y) - grad_y f_i(x, y)     (gradient of phi^y_{x,i})

and ``conj_grad_*`` invert them in the first argument.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .prox import Regularizer, Zero, regularizer_from_json

__all__ = [
    "FORMAT",
    "QuadraticFamily",
    "DiagonalQuadraticFamily",
    "ComponentOracle",
    "ProblemSpec",
    "IterateState",
    "GradientCache",
    "SaddlePoint",
    "UnsupportedProblem",
    "batch_mean",
    "lagrangian_value",
    "full_gradients",
    "natural_residual",
    "kkt_residual",
    "solve_kkt_reference",
    "problem_to_json",
    "problem_from_json",
]

FORMAT = "minimax-spp/1"


class UnsupportedProblem(ValueError):
    """Raised when an operation needs structure the problem does not have."""


def batch_mean(rows):
    """Mean over axis 0 with rows summed in index order (bitwise reproducible)."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 2:
        return _kernels.ordered_row_mean(rows)
    return _kernels.ordered_row_mean(rows.reshape(rows.shape[0], -1)).reshape(rows.shape[1:])


def _asarr(a):
    return np.ascontiguousarray(np.asarray(a, dtype=float))


def _is_full(idx, N):
    # the identity index 0..N-1 selects every row in order
    return len(idx) == N and idx[0] == 0 and idx[-1] == N - 1 and bool(np.all(np.diff(idx) == 1))


def _per(a, idx):
    """Rows of a per-component array; shared (1-D) arrays broadcast as they are."""
    if a.ndim == 1 or _is_full(idx, a.shape[0]):
        return a
    return a[idx]


def _per2(a, idx):
    if a.ndim == 2:
        return np.broadcast_to(a, (len(idx),) + a.shape)
    return a[idx]


class QuadraticFamily:
    """Dense quadratic-bilinear components.

    Parameters
    ----------
    P : (n, n) or (N, n, n) symmetric positive definite
    p : (n,) or (N, n)
    Q : (m, m) or (N, m, m) symmetric positive definite
    q : (m,) or (N, m)
    K : (N, m, n)
    """

    kind = "quadratic"
    jac_kind = "dense"

    def __init__(self, P, p, Q, q, K):
        self.P = _asarr(P)
        self.p = _asarr(p)
        self.Q = _asarr(Q)
        self.q = _asarr(q)
        self.K = _asarr(K)
        if self.K.ndim != 3:
            raise ValueError("K must have shape (N, m, n)")
        self.N, self.m, self.n = self.K.shape
        for name, a, d, nd in (("P", self.P, self.n, 2), ("Q", self.Q, self.m, 2)):
            if a.shape[-2:] != (d, d) or a.ndim not in (nd, nd + 1):
                raise ValueError(f"{name} has shape {a.shape}, expected ({d},{d}) or (N,{d},{d})")
            if a.ndim == 3 and a.shape[0] != self.N:
                raise ValueError(f"{name} has {a.shape[0]} components, expected {self.N}")
        for name, a, d in (("p", self.p, self.n), ("q", self.q, self.m)):
            if a.shape not in ((d,), (self.N, d)):
                raise ValueError(f"{name} has shape {a.shape}")
        self._Pinv = self._inverse(self.P)
        self._Qinv = self._inverse(self.Q)
        self._KT = np.ascontiguousarray(self.K.transpose(0, 2, 1))

    @staticmethod
    def _inverse(M):
        if M.ndim == 2:
            inv = sla.cho_solve(sla.cho_factor(M), np.eye(M.shape[0]))
            return 0.5 * (inv + inv.T)
        inv = np.linalg.inv(M)
        return 0.5 * (inv + inv.transpose(0, 2, 1))

    # primal oracles -----------------------------------------------------
    @staticmethod
    def _quad(M, idx, X):
        # row-wise M_i @ X_i for shared or per-component M
        if M.ndim == 2:
            return X @ M.T
        return np.matmul(M[idx], X[..., None])[..., 0]

    def grad_g(self, idx, X):
        X = np.broadcast_to(X, (len(idx), self.n))
        return self._quad(self.P, idx, X) + _per(self.p, idx)

    def grad_h(self, idx, Y):
        Y = np.broadcast_to(Y, (len(idx), self.m))
        return self._quad(self.Q, idx, Y) + _per(self.q, idx)

    def grad_f_x(self, idx, X, Y):
        Y = np.broadcast_to(Y, (len(idx), self.m))
        return np.matmul(self._KT[idx], Y[..., None])[..., 0]

    def grad_f_y(self, idx, X, Y):
        X = np.broadcast_to(X, (len(idx), self.n))
        return np.matmul(self.K[idx], X[..., None])[..., 0]

    def g_val(self, idx, X):
        X = np.broadcast_to(X, (len(idx), self.n))
        return 0.5 * np.sum(X * self._quad(self.P, idx, X), axis=1) + np.sum(_per(self.p, idx) * X, axis=1)

    def h_val(self, idx, Y):
        Y = np.broadcast_to(Y, (len(idx), self.m))
        return 0.5 * np.sum(Y * self._quad(self.Q, idx, Y), axis=1) + np.sum(_per(self.q, idx) * Y, axis=1)

    def f_val(self, idx, X, Y):
        Y = np.broadcast_to(Y, (len(idx), self.m))
        return np.sum(Y * self.grad_f_y(idx, X, Y), axis=1)

    # conjugate oracles --------------------------------------------------
    def _solve(self, Minv, idx, R):
        if Minv.ndim == 2:
            return R @ Minv.T
        return np.matmul(Minv[idx], R[..., None])[..., 0]

    def conj_grad_x(self, idx, XI, y):
        R = XI - _per(self.p, idx) - self.grad_f_x(idx, None, y)
        return self._solve(self._Pinv, idx, R)

    def conj_grad_y(self, idx, XI, x):
        R = XI - _per(self.q, idx) + self.grad_f_y(idx, x, None)
        return self._solve(self._Qinv, idx, R)

    def conj_jac_x(self, idx, XI, y):
        return np.array(_per2(self._Pinv, idx))

    def conj_jac_y(self, idx, XI, x):
        return np.array(_per2(self._Qinv, idx))

    # constants ----------------------------------------------------------
    @staticmethod
    def _specnorm(M):
        if M.ndim == 2:
            return float(np.linalg.norm(M, 2))
        return float(np.max(np.linalg.norm(M, 2, axis=(1, 2))))

    def lipschitz(self):
        """(L_g_bar, L_h_bar, L_f_bar): maxima over components."""
        return self._specnorm(self.P), self._specnorm(self.Q), self._specnorm(self.K)

    def mean_quadratic(self):
        """Averaged (P, p, Q, q, K) of the finite sum."""
        P = self.P if self.P.ndim == 2 else batch_mean(self.P)
        Q = self.Q if self.Q.ndim == 2 else batch_mean(self.Q)
        p = self.p if self.p.ndim == 1 else batch_mean(self.p)
        q = self.q if self.q.ndim == 1 else batch_mean(self.q)
        return P, p, Q, q, batch_mean(self.K)

    def moduli(self):
        P, _, Q, _, _ = self.mean_quadratic()
        return float(np.linalg.eigvalsh(P)[0]), float(np.linalg.eigvalsh(Q)[0])

    def to_json(self):
        return {
            "kind": self.kind,
            "P": self.P.tolist(),
            "p": self.p.tolist(),
            "Q": self.Q.tolist(),
            "q": self.q.tolist(),
            "K": self.K.tolist(),
        }


class DiagonalQuadraticFamily:
    """Separable quadratic components with a one-to-one coupling.

    g_i(x) = sum_j P_ij x_j^2 / 2 + p_i'x,  h_i(y) = sum_e Q_ie y_e^2 / 2 + q_i'y,
    f_i(x, y) = sum_e k_ie y_e x_{couple[e]}.
    Shared (1-D) or per-component (2-D) arrays are accepted for P, p, Q, q, k.
    """

    kind = "diag_quadratic"
    jac_kind = "diag"

    def __init__(self, P, p, Q, q, k, couple, N=None):
        self.P = _asarr(P)
        self.p = _asarr(p)
        self.Q = _asarr(Q)
        self.q = _asarr(q)
        self.k = _asarr(k)
        self.couple = np.asarray(couple, dtype=np.intp)
        sizes = [a.shape[0] for a in (self.P, self.p, self.Q, self.q, self.k) if a.ndim == 2]
        if N is None:
            N = sizes[0] if sizes else 1
        if any(s != N for s in sizes):
            raise ValueError("inconsistent component counts")
        self.N = int(N)
        self.n = self.P.shape[-1]
        self.m = self.Q.shape[-1]
        if self.p.shape[-1] != self.n or self.q.shape[-1] != self.m or self.k.shape[-1] != self.m:
            raise ValueError("inconsistent dimensions in diagonal family")
        if self.couple.shape != (self.m,) or (self.m and self.couple.max() >= self.n):
            raise ValueError("couple must map each y coordinate to an x coordinate")
        if len(np.unique(self.couple)) != self.m:
            raise ValueError("couple must be injective")
        if np.any(self.P <= 0) or np.any(self.Q <= 0):
            raise ValueError("diagonal curvatures must be positive")

    def grad_g(self, idx, X):
        X = np.broadcast_to(X, (len(idx), self.n))
        return _per(self.P, idx) * X + _per(self.p, idx)

    def grad_h(self, idx, Y):
        Y = np.broadcast_to(Y, (len(idx), self.m))
        return _per(self.Q, idx) * Y + _per(self.q, idx)

    def grad_f_x(self, idx, X, Y):
        out = np.zeros((len(idx), self.n))
        out[:, self.couple] = _per(self.k, idx) * Y
        return out

    def grad_f_y(self, idx, X, Y):
        X = np.broadcast_to(X, (len(idx), self.n))
        return _per(self.k, idx) * X[:, self.couple]

    def g_val(self, idx, X):
        X = np.broadcast_to(X, (len(idx), self.n))
        return np.sum(0.5 * _per(self.P, idx) * X * X + _per(self.p, idx) * X, axis=1)

    def h_val(self, idx, Y):
        Y = np.broadcast_to(Y, (len(idx), self.m))
        return np.sum(0.5 * _per(self.Q, idx) * Y * Y + _per(self.q, idx) * Y, axis=1)

    def f_val(self, idx, X, Y):
        Y = np.broadcast_to(Y, (len(idx), self.m))
        return np.sum(Y * self.grad_f_y(idx, X, Y), axis=1)

    def conj_grad_x(self, idx, XI, y):
        return (XI - _per(self.p, idx) - self.grad_f_x(idx, None, y)) / _per(self.P, idx)

    def conj_grad_y(self, idx, XI, x):
        return (XI - _per(self.q, idx) + self.grad_f_y(idx, x, None)) / _per(self.Q, idx)

    def conj_jac_x(self, idx, XI, y):
        return np.array(np.broadcast_to(1.0 / _per(self.P, idx), (len(idx), self.n)))

    def conj_jac_y(self, idx, XI, x):
        return np.array(np.broadcast_to(1.0 / _per(self.Q, idx), (len(idx), self.m)))

    def lipschitz(self):
        return float(np.max(self.P)), float(np.max(self.Q)), float(np.max(np.abs(self.k))) if self.m else 0.0

    def mean_quadratic(self):
        def avg(a):
            return a if a.ndim == 1 else batch_mean(a)

        Kbar = np.zeros((self.m, self.n))
        Kbar[np.arange(self.m), self.couple] = avg(self.k)
        return np.diag(avg(self.P)), avg(self.p), np.diag(avg(self.Q)), avg(self.q), Kbar

    def moduli(self):
        P, _, Q, _, _ = self.mean_quadratic()
        return float(np.min(np.diag(P))), float(np.min(np.diag(Q)))

    def to_json(self):
        return {
            "kind": self.kind,
            "N": self.N,
            "P": self.P.tolist(),
            "p": self.p.tolist(),
            "Q": self.Q.tolist(),
            "q": self.q.tolist(),
            "k": self.k.tolist(),
            "couple": self.couple.tolist(),
        }


def family_from_json(doc):
    kind = doc.get("kind")
    if kind == "quadratic":
        return QuadraticFamily(doc["P"], doc["p"], doc["Q"], doc["q"], doc["K"])
    if kind == "diag_quadratic":
        return DiagonalQuadraticFamily(doc["P"], doc["p"], doc["Q"], doc["q"], doc["k"], doc["couple"], doc.get("N"))
    raise UnsupportedProblem(f"unknown component kind {kind!r}")


class ComponentOracle:
    """Single-component view of a family (mainly for checks and tests)."""

    def __init__(self, family, i):
        self.family = family
        self.idx = np.array([i])

    def g_val(self, x):
        return float(self.family.g_val(self.idx, x)[0])

    def grad_g(self, x):
        return self.family.grad_g(self.idx, x)[0]

    def h_val(self, y):
        return float(self.family.h_val(self.idx, y)[0])

    def grad_h(self, y):
        return self.family.grad_h(self.idx, y)[0]

    def f_val(self, x, y):
        return float(self.family.f_val(self.idx, x, y)[0])

    def grad_f_x(self, x, y):
        return self.family.grad_f_x(self.idx, x, y)[0]

    def grad_f_y(self, x, y):
        return self.family.grad_f_y(self.idx, x, y)[0]

    def conj_grad_x(self, xi, y):
        return self.family.conj_grad_x(self.idx, np.atleast_2d(xi), y)[0]

    def conj_grad_y(self, xi, x):
        return self.family.conj_grad_y(self.idx, np.atleast_2d(xi), x)[0]

    def _as_matrix(self, J):
        return np.diag(J[0]) if J.ndim == 2 else J[0]

    def conj_jac_x(self, xi, y):
        return self._as_matrix(self.family.conj_jac_x(self.idx, np.atleast_2d(xi), y))

    def conj_jac_y(self, xi, x):
        return self._as_matrix(self.family.conj_jac_y(self.idx, np.atleast_2d(xi), x))


@dataclass
class ProblemSpec:
    """Linearly constrained finite-sum minimax problem.

    Moduli and Lipschitz constants default to values computed from the
    family: ``mu_x``/``mu_y`` are the moduli of the averaged functions and
    ``mu_star_*`` default to ``1 / L_phi_*``.
    """

    family: object
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    phi: Regularizer = field(default_factory=Zero)
    psi: Regularizer = field(default_factory=Zero)
    mu_x: float = None
    mu_y: float = None
    L_g_bar: float = None
    L_h_bar: float = None
    L_f_bar: float = None
    mu_star_x: float = None
    mu_star_y: float = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        fam = self.family
        self.A = _asarr(self.A).reshape(-1, fam.n) if np.size(self.A) else np.zeros((len(np.atleast_1d(self.c)), fam.n))
        self.q = self.A.shape[0]
        self.B = _asarr(self.B).reshape(self.q, fam.m) if np.size(self.B) else np.zeros((self.q, fam.m))
        self.c = _asarr(self.c).reshape(self.q)
        if self.A.shape != (self.q, fam.n) or self.B.shape != (self.q, fam.m):
            raise ValueError("constraint matrices inconsistent with dimensions")
        if fam.N < 1:
            raise ValueError("at least one component is required")
        Lg, Lh, Lf = fam.lipschitz()
        self.L_g_bar = Lg if self.L_g_bar is None else float(self.L_g_bar)
        self.L_h_bar = Lh if self.L_h_bar is None else float(self.L_h_bar)
        self.L_f_bar = Lf if self.L_f_bar is None else float(self.L_f_bar)
        mx, my = fam.moduli()
        self.mu_x = mx if self.mu_x is None else float(self.mu_x)
        self.mu_y = my if self.mu_y is None else float(self.mu_y)
        if not (self.mu_x > 0 and self.mu_y > 0):
            raise ValueError("strong convexity moduli must be positive")
        if self.mu_star_x is None:
            self.mu_star_x = 1.0 / self.L_phi_x
        if self.mu_star_y is None:
            self.mu_star_y = 1.0 / self.L_phi_y
        if not (self.mu_star_x > 0 and self.mu_star_y > 0):
            raise ValueError("conjugate moduli must be positive")
        self._proj_factor = None

    @property
    def n(self):
        return self.family.n

    @property
    def m_dim(self):
        return self.family.m

    @property
    def N(self):
        return self.family.N

    @property
    def L_phi_x(self):
        return self.L_f_bar + self.L_g_bar

    @property
    def L_phi_y(self):
        return self.L_f_bar + self.L_h_bar

    @property
    def components(self):
        return [ComponentOracle(self.family, i) for i in range(self.N)]

    def grad_x_rows(self, idx, x, y):
        """Rows grad g_i(x) + grad_x f_i(x, y) for i in idx."""
        fam = self.family
        return fam.grad_g(idx, x) + fam.grad_f_x(idx, x, y)

    def grad_y_rows(self, idx, x, y):
        """Rows grad h_i(y) - grad_y f_i(x, y) for i in idx."""
        fam = self.family
        return fam.grad_h(idx, y) - fam.grad_f_y(idx, x, y)

    def batch_gradients(self, idx, x, y):
        """Batch averages of the two gradients; indices are summed in ascending order."""
        idx = np.sort(np.asarray(idx, dtype=np.intp))
        return batch_mean(self.grad_x_rows(idx, x, y)), batch_mean(self.grad_y_rows(idx, x, y))

    def residual(self, x, y):
        return self.A @ x + self.B @ y + self.c


def _check_dims(p, x=None, y=None, lam=None):
    if x is not None and np.shape(x) != (p.n,):
        raise ValueError(f"x has shape {np.shape(x)}, expected ({p.n},)")
    if y is not None and np.shape(y) != (p.m_dim,):
        raise ValueError(f"y has shape {np.shape(y)}, expected ({p.m_dim},)")
    if lam is not None and np.shape(lam) != (p.q,):
        raise ValueError(f"lambda has shape {np.shape(lam)}, expected ({p.q},)")


def lagrangian_value(p, x, y, lam):
    """phi + g + f - h - psi + <lambda, Ax + By + c>; +inf outside dom phi, -inf outside dom psi."""
    _check_dims(p, x, y, lam)
    px = p.phi.value(x)
    py = p.psi.value(y)
    if np.isinf(px):
        return np.inf
    if np.isinf(py):
        return -np.inf
    fam = p.family
    allidx = np.arange(p.N)
    g = float(np.mean(fam.g_val(allidx, x)))
    h = float(np.mean(fam.h_val(allidx, y)))
    f = float(np.mean(fam.f_val(allidx, x, y)))
    return px + g + f - h - py + float(lam @ p.residual(x, y))


def full_gradients(p, x, y):
    """(gx, gy): full averages of grad g + grad_x f and grad h - grad_y f."""
    _check_dims(p, x, y)
    return p.batch_gradients(np.arange(p.N), x, y)


def natural_residual(p, block, x, y, lam, alpha=1.0, grads=None):
    """Natural residual of the X or Y block at (x, y, lambda).

    ``grads`` may supply the full gradients at (x, y) to avoid recomputing them.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    _check_dims(p, x, y, lam)
    gx, gy = full_gradients(p, x, y) if grads is None else grads
    if block in ("X", "x"):
        return x - p.phi.prox(alpha, x - alpha * (gx + p.A.T @ lam))
    if block in ("Y", "y"):
        return y - p.psi.prox(alpha, y - alpha * (gy - p.B.T @ lam))
    raise ValueError(f"block must be 'X' or 'Y', got {block!r}")


def kkt_residual(p, x, y, lam, grads=None):
    """max of the two natural residual norms (alpha = 1) and ||Ax + By + c||."""
    grads = full_gradients(p, x, y) if grads is None else grads
    rx = np.linalg.norm(natural_residual(p, "X", x, y, lam, 1.0, grads))
    ry = np.linalg.norm(natural_residual(p, "Y", x, y, lam, 1.0, grads))
    return float(max(rx, ry, np.linalg.norm(p.residual(x, y))))


@dataclass
class SaddlePoint:
    x_star: np.ndarray
    y_star: np.ndarray
    lambda_star: np.ndarray
    kkt_residual: float


@dataclass
class GradientCache:
    """Full gradients gx, gy evaluated at the reference point (x_ref, y_ref)."""

    x_ref: np.ndarray
    y_ref: np.ndarray
    gx: np.ndarray
    gy: np.ndarray

    @classmethod
    def compute(cls, p, x_ref, y_ref):
        gx, gy = full_gradients(p, x_ref, y_ref)
        return cls(np.array(x_ref, dtype=float), np.array(y_ref, dtype=float), gx, gy)

    def matches(self, x_ref, y_ref):
        return np.array_equal(self.x_ref, x_ref) and np.array_equal(self.y_ref, y_ref)


@dataclass
class IterateState:
    """Current iterate (x, y, lambda), SVRG reference and the cache at the reference."""

    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    x_ref: np.ndarray = None
    y_ref: np.ndarray = None
    lam_ref: np.ndarray = None
    cache: GradientCache = None

    def refresh_reference(self, p):
        """Make the current iterate the reference and recompute the cached gradients."""
        self.x_ref = self.x.copy()
        self.y_ref = self.y.copy()
        self.lam_ref = self.lam.copy()
        self.cache = GradientCache.compute(p, self.x_ref, self.y_ref)

    def copy(self):
        def cp(a):
            return None if a is None else a.copy()

        return IterateState(cp(self.x), cp(self.y), cp(self.lam), cp(self.x_ref), cp(self.y_ref),
                            cp(self.lam_ref), self.cache)


def solve_kkt_reference(p, tol=1e-10):
    """Solve the linear KKT system of a quadratic problem with phi = psi = 0."""
    if not isinstance(p.phi, Zero) or not isinstance(p.psi, Zero):
        raise UnsupportedProblem("KKT reference needs phi = psi = 0")
    if not hasattr(p.family, "mean_quadratic"):
        raise UnsupportedProblem("KKT reference needs quadratic-bilinear components")
    P, pv, Q, qv, K = p.family.mean_quadratic()
    n, m, q = p.n, p.m_dim, p.q
    M = np.zeros((n + m + q, n + m + q))
    M[:n, :n] = P
    M[:n, n:n + m] = K.T
    M[:n, n + m:] = p.A.T
    M[n:n + m, :n] = K
    M[n:n + m, n:n + m] = -Q
    M[n:n + m, n + m:] = p.B.T
    M[n + m:, :n] = p.A
    M[n + m:, n:n + m] = p.B
    rhs = np.concatenate([-pv, qv, -p.c])
    sv = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * 1e-12)) if sv.size else 0
    if rank < M.shape[0]:
        raise np.linalg.LinAlgError(
            f"KKT matrix is singular: rank {rank} < {M.shape[0]} (deficiency {M.shape[0] - rank})"
        )
    sol = np.linalg.solve(M, rhs)
    # one step of iterative refinement
    sol += np.linalg.solve(M, rhs - M @ sol)
    x, y, lam = sol[:n], sol[n:n + m], sol[n + m:]
    res = kkt_residual(p, x, y, lam)
    if res > tol * max(1.0, np.linalg.norm(rhs)):
        raise np.linalg.LinAlgError(f"KKT solve inaccurate: residual {res:.3e}")
    return SaddlePoint(x, y, lam, res)


def problem_to_json(p):
    return {
        "format": FORMAT,
        "n": p.n,
        "m": p.m_dim,
        "q": p.q,
        "N": p.N,
        "components": p.family.to_json(),
        "phi": p.phi.to_json(),
        "psi": p.psi.to_json(),
        "A": p.A.tolist(),
        "B": p.B.tolist(),
        "c": p.c.tolist(),
        "mu_x": p.mu_x,
        "mu_y": p.mu_y,
        "mu_star_x": p.mu_star_x,
        "mu_star_y": p.mu_star_y,
    }


def problem_from_json(doc):
    if doc.get("format") != FORMAT:
        raise ValueError(f"expected format {FORMAT!r}, got {doc.get('format')!r}")
    fam = family_from_json(doc["components"])
    if (fam.n, fam.m, fam.N) != (doc["n"], doc["m"], doc["N"]):
        raise ValueError("declared dimensions disagree with the component arrays")
    q = doc["q"]
    A = np.asarray(doc["A"], dtype=float).reshape(q, fam.n)
    B = np.asarray(doc["B"], dtype=float).reshape(q, fam.m)
    return ProblemSpec(
        fam, A, B, np.asarray(doc["c"], dtype=float),
        phi=regularizer_from_json(doc.get("phi")),
        psi=regularizer_from_json(doc.get("psi")),
        mu_x=doc.get("mu_x"), mu_y=doc.get("mu_y"),
        mu_star_x=doc.get("mu_star_x"), mu_star_y=doc.get("mu_star_y"),
    )
