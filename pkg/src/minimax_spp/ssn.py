"""Globalized semismooth Newton solver for the conjugate-space subproblems.

For a block (X or Y) with anchor point ``a``, drift ``v``, step ``alpha`` and a
batch of b components, the unknown is ``xi = (xi_1, ..., xi_b)`` and

    u(xi)  = a - v - (alpha / b) sum_j xi_j
    F_i    = grad phi_i^*(xi_i) - prox_{alpha r}(u(xi))
    I(xi)  = sum_i phi_i^*(xi_i) + (b / 2 alpha) ||u||^2 - b env_{alpha r}(u)

so that F = grad I. Here ``phi_i`` is phi^x_{y,i} (X block, y frozen) or
phi^y_{x,i} (Y block, x frozen) and ``env_{alpha r}`` is the Moreau envelope
with parameter alpha. The Newton matrix acts blockwise as

    (W d)_i = H_i d_i + (alpha / b) U sum_j d_j

with H_i a generalized Jacobian of grad phi_i^* and U one of prox.
Arrays of shape (b, dim) hold xi, F and directions.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .problem import batch_mean

__all__ = [
    "SSNParams",
    "SubproblemSpec",
    "NewtonReport",
    "StructuredW",
    "SubproblemError",
    "CGNonConvergence",
    "LineSearchError",
    "residual_F",
    "objective_I",
    "jacobian_W",
    "cg_solve",
    "armijo_search",
    "solve_subproblem",
    "recover_primal",
    "inexactness_bound",
]

EPS = np.finfo(float).eps


class SubproblemError(RuntimeError):
    """Newton solve failed; ``report`` carries the iteration history."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class CGNonConvergence(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


class LineSearchError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class SSNParams:
    """Line-search and damping parameters.

    ``eta_floor`` is a lower bound on the damping,
    eta_j = max(eta_floor, tau1 * min(tau2, ||F_j||)).
    """

    gamma_hat: float = 0.4
    rho: float = 0.9
    tau: float = 0.1
    tau1: float = 0.01
    tau2: float = 1e-6
    eta_floor: float = 0.0
    max_newton_iters: int = 100
    max_line_search: int = 200

    def __post_init__(self):
        if not 0 < self.gamma_hat < 0.5:
            raise ValueError("gamma_hat must lie in (0, 1/2)")
        for name in ("rho", "tau1", "tau2"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.eta_floor < 0:
            raise ValueError("eta_floor must be nonnegative")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be positive")


@dataclass
class SubproblemSpec:
    """One block subproblem of the inner iteration."""

    problem: object
    block: str
    anchor: np.ndarray
    other_point: np.ndarray
    alpha: float
    batch: np.ndarray
    drift: np.ndarray
    eps_sub: float = 1e-10
    params: SSNParams = field(default_factory=SSNParams)

    def __post_init__(self):
        if self.block not in ("X", "Y"):
            raise ValueError("block must be 'X' or 'Y'")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.eps_sub > 0:
            raise ValueError("eps_sub must be positive")
        self.batch = np.asarray(self.batch, dtype=np.intp)
        self.anchor = np.asarray(self.anchor, dtype=float)
        self.drift = np.asarray(self.drift, dtype=float)
        if self.anchor.shape != (self.dim,) or self.drift.shape != (self.dim,):
            raise ValueError("anchor and drift must match the block dimension")

    @property
    def b(self):
        return len(self.batch)

    @property
    def dim(self):
        return self.problem.n if self.block == "X" else self.problem.m_dim

    @property
    def regularizer(self):
        return self.problem.phi if self.block == "X" else self.problem.psi

    @property
    def jac_kind(self):
        return self.problem.family.jac_kind

    def conj_grad(self, xi):
        fam = self.problem.family
        if self.block == "X":
            return fam.conj_grad_x(self.batch, xi, self.other_point)
        return fam.conj_grad_y(self.batch, xi, self.other_point)

    def conj_jac(self, xi):
        fam = self.problem.family
        if self.block == "X":
            return fam.conj_jac_x(self.batch, xi, self.other_point)
        return fam.conj_jac_y(self.batch, xi, self.other_point)

    def component_values(self, pts):
        """phi_i(pts_i) for each batch entry."""
        fam = self.problem.family
        if self.block == "X":
            return fam.g_val(self.batch, pts) + fam.f_val(self.batch, pts, self.other_point)
        return fam.h_val(self.batch, pts) - fam.f_val(self.batch, self.other_point, pts)

    def forward_gradients(self, point):
        """Rows grad phi_i(point); the default Newton starting point."""
        if self.block == "X":
            return self.problem.grad_x_rows(self.batch, point, self.other_point)
        return self.problem.grad_y_rows(self.batch, self.other_point, point)

    def prox_argument(self, xi):
        return self.anchor - self.drift - self.alpha * batch_mean(xi)


def _check_xi(xi, spec):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (spec.b, spec.dim):
        raise ValueError(f"xi has shape {xi.shape}, expected ({spec.b}, {spec.dim})")
    bad = ~np.all(np.isfinite(xi), axis=1)
    if np.any(bad):
        raise ValueError(f"xi block {int(np.argmax(bad))} is outside the conjugate domain")
    return xi


def _residual_parts(xi, spec):
    u = spec.prox_argument(xi)
    z = spec.regularizer.prox(spec.alpha, u)
    xhat = spec.conj_grad(xi)
    return xhat - z, u, z, xhat


def residual_F(xi, spec):
    """F(xi) as a (b, dim) array."""
    xi = _check_xi(xi, spec)
    return _residual_parts(xi, spec)[0]


def _objective_terms(xi, spec, xhat=None, u=None, z=None):
    if u is None:
        u = spec.prox_argument(xi)
        z = spec.regularizer.prox(spec.alpha, u)
    if xhat is None:
        xhat = spec.conj_grad(xi)
    conj = np.sum(xhat * xi, axis=1) - spec.component_values(xhat)
    # (b/2a)||u||^2 - b env(u) rewritten without the large cancellation
    a, b = spec.alpha, spec.b
    tail = b * ((u @ z - 0.5 * (z @ z)) / a - spec.regularizer.value(z))
    total = float(np.sum(conj)) + tail
    scale = float(np.sum(np.abs(conj))) + abs(tail) + float(np.sum(np.abs(xhat * xi)))
    return total, scale


def objective_I(xi, spec):
    """Potential I(xi) whose gradient is F."""
    xi = _check_xi(xi, spec)
    return _objective_terms(xi, spec)[0]


class StructuredW:
    """Matrix-free W = blockdiag(H_i) + (alpha/b) (1 1') kron U.

    ``H`` is (b, dim) for diagonal Jacobians or (b, dim, dim) for dense ones;
    ``U`` is the diagonal of the prox Jacobian element.
    """

    def __init__(self, H, U, coef):
        self.H = np.asarray(H, dtype=float)
        self.U = np.asarray(U, dtype=float)
        self.coef = float(coef)
        self.diagonal = self.H.ndim == 2
        self.shape2 = self.H.shape[:2]

    def matvec(self, d):
        d = np.asarray(d, dtype=float).reshape(self.shape2)
        if self.diagonal:
            hd = self.H * d
        else:
            hd = np.matmul(self.H, d[..., None])[..., 0]
        return hd + self.coef * self.U * d.sum(axis=0)

    def norm_bound(self):
        if self.diagonal:
            hmax = float(np.max(np.abs(self.H))) if self.H.size else 0.0
        else:
            hmax = float(np.max(np.linalg.norm(self.H, 2, axis=(1, 2))))
        return hmax + self.coef * self.shape2[0] * float(np.max(np.abs(self.U), initial=0.0))

    def to_dense(self):
        b, n = self.shape2
        M = np.zeros((b * n, b * n))
        for i in range(b):
            blk = np.diag(self.H[i]) if self.diagonal else self.H[i]
            M[i * n:(i + 1) * n, i * n:(i + 1) * n] = blk
        M += np.kron(np.ones((b, b)), self.coef * np.diag(self.U))
        return M


def jacobian_W(xi, spec):
    """Structured Newton matrix at xi."""
    xi = _check_xi(xi, spec)
    u = spec.prox_argument(xi)
    U = spec.regularizer.jacobian_diag(spec.alpha, u)
    return StructuredW(spec.conj_jac(xi), U, spec.alpha / spec.b)


def cg_solve(W, eta, rhs, tol, maxiter=None):
    """Solve (W + eta I) d = rhs by (preconditioned) conjugate gradients.

    ``W`` is a :class:`StructuredW` or a symmetric matrix. The stopping test
    uses the true residual norm. Returns ``(d, iterations, residual_norm)``.
    Raises :class:`CGNonConvergence` if the cap (10 x system dimension by
    default) is reached above both ``tol`` and the rounding floor.
    """
    rhs = np.asarray(rhs, dtype=float)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if maxiter is None:
        maxiter = 10 * rhs.size
    if isinstance(W, StructuredW) and W.diagonal:
        d, it, res = _kernels.diag_structured_pcg(W.H, W.U, W.coef, eta, rhs.reshape(W.shape2), tol, maxiter)
        wnorm = W.norm_bound() + eta
        matvec = None
    else:
        if isinstance(W, StructuredW):
            def matvec(v):
                return W.matvec(v) + eta * v
            wnorm = W.norm_bound() + eta
        else:
            M = np.asarray(W, dtype=float)

            def matvec(v):
                return (M @ v.ravel()).reshape(v.shape) + eta * v
            wnorm = float(np.linalg.norm(M, 2)) + eta
        d, it, res = _plain_cg(matvec, rhs, tol, maxiter)
    if not np.all(np.isfinite(d)):
        raise FloatingPointError("non-finite value in CG iterate")
    floor = 16 * EPS * (wnorm * float(np.linalg.norm(d)) + float(np.linalg.norm(rhs)))
    if res > tol and res > floor:
        raise CGNonConvergence(f"CG stopped after {it} iterations with residual {res:.3e} > {tol:.3e}", res)
    return d, it, res


def _plain_cg(matvec, rhs, tol, maxiter):
    x = np.zeros_like(rhs)
    r = rhs.copy()
    rnorm = float(np.linalg.norm(r))
    if rnorm <= tol:
        return x, 0, rnorm
    p = r.copy()
    rr = rnorm * rnorm
    it = 0
    while it < maxiter:
        it += 1
        q = matvec(p)
        if not np.all(np.isfinite(q)):
            raise FloatingPointError("non-finite value in matrix-vector product")
        pq = float(np.sum(p * q))
        if not pq > 0:
            break
        step = rr / pq
        x += step * p
        r -= step * q
        if it % 16 == 0:
            r = rhs - matvec(x)
        rr_new = float(np.sum(r * r))
        if np.sqrt(rr_new) <= tol:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    res = float(np.linalg.norm(rhs - matvec(x)))
    return x, it, res


def armijo_search(xi, d, spec, I0=None, F0=None, scale=None):
    """Backtracking on I along d: smallest l with the sufficient-decrease test.

    The test carries a rounding allowance of 8 eps times the magnitude of the
    terms of I, so steps whose decrease is below machine resolution are not
    rejected spuriously. Returns ``(step, new_xi, l, I_new)``.
    """
    prm = spec.params
    if I0 is None:
        I0, scale = _objective_terms(xi, spec)
    elif scale is None:
        scale = abs(I0)
    if F0 is None:
        F0 = residual_F(xi, spec)
    slope = float(np.sum(F0 * d))
    if not slope < 0:
        raise LineSearchError("direction is not a descent direction", {"slope": slope})
    allow = 8 * EPS * (scale + abs(I0))
    step = 1.0
    for ell in range(prm.max_line_search + 1):
        trial = xi + step * d
        if np.all(np.isfinite(trial)):
            I1 = _objective_terms(trial, spec)[0]
            if I1 <= I0 + prm.gamma_hat * step * slope + allow:
                return step, trial, ell, I1
        step *= prm.rho
    raise LineSearchError(
        f"no acceptable step after {prm.max_line_search} reductions",
        {"I0": I0, "slope": slope, "last_step": step},
    )


@dataclass
class NewtonReport:
    iterations: int = 0
    final_residual: float = np.inf
    converged: bool = False
    tolerance_used: float = 0.0
    history: list = field(default_factory=list)

    def rows(self):
        """History as dicts with keys iter, f_norm, step, cg_iters, eta."""
        return list(self.history)


def _noise_level(spec, xi, xhat, u, H):
    # attainable accuracy of F in floating point
    hmax = float(np.max(np.abs(H))) if H.ndim == 2 else float(np.max(np.linalg.norm(H, 2, axis=(1, 2))))
    # u = anchor - drift - alpha mean(xi) may cancel large terms, so count them rather than |u|
    u_terms = (float(np.linalg.norm(spec.anchor)) + float(np.linalg.norm(spec.drift))
               + spec.alpha * float(np.linalg.norm(xi)) / np.sqrt(spec.b))
    mag = (float(np.linalg.norm(xhat)) + np.sqrt(spec.b) * (float(np.linalg.norm(u)) + u_terms)
           + hmax * float(np.linalg.norm(xi)))
    return 8 * EPS * mag


def solve_subproblem(spec, warm_start=None):
    """Run the damped semismooth Newton method until ||F|| <= eps_sub.

    Starts from the forward gradients at the anchor unless ``warm_start`` is
    given. If the requested tolerance lies below the rounding level of F the
    solve stops at that level; ``report.tolerance_used`` records which bound
    was active and ``report.converged`` compares against ``eps_sub`` itself.
    """
    prm = spec.params
    xi = spec.forward_gradients(spec.anchor) if warm_start is None else np.array(warm_start, dtype=float)
    xi = _check_xi(xi, spec)
    rep = NewtonReport()
    for j in range(prm.max_newton_iters + 1):
        F, u, z, xhat = _residual_parts(xi, spec)
        nF = float(np.linalg.norm(F))
        if not np.isfinite(nF):
            raise SubproblemError("non-finite Newton residual", rep)
        H = spec.conj_jac(xi)
        tol = max(spec.eps_sub, _noise_level(spec, xi, xhat, u, H))
        rep.iterations = j
        rep.final_residual = nF
        rep.tolerance_used = tol
        if nF <= tol:
            rep.converged = nF <= spec.eps_sub
            rep.history.append({"iter": j, "f_norm": nF, "step": 0.0, "cg_iters": 0, "eta": 0.0})
            return xi, rep
        if j == prm.max_newton_iters:
            break
        eta = max(prm.eta_floor, prm.tau1 * min(prm.tau2, nF))
        cg_tol = min(eta, nF ** (1.0 + prm.tau))
        W = StructuredW(H, spec.regularizer.jacobian_diag(spec.alpha, u), spec.alpha / spec.b)
        try:
            d, cg_it, cg_res = cg_solve(W, eta, -F, cg_tol)
            I0, scale = _objective_terms(xi, spec, xhat, u, z)
            step, xi_new, ell, _ = armijo_search(xi, d, spec, I0=I0, F0=F, scale=scale)
        except (CGNonConvergence, LineSearchError) as exc:
            raise SubproblemError(f"Newton iteration {j} failed: {exc}", rep) from exc
        rep.history.append({"iter": j, "f_norm": nF, "step": step, "cg_iters": cg_it, "eta": eta,
                            "cg_residual": cg_res, "cg_tol": cg_tol, "ls_reductions": ell})
        xi = xi_new
    raise SubproblemError(f"no convergence in {prm.max_newton_iters} Newton iterations (||F|| = {rep.final_residual:.3e})", rep)


def recover_primal(xi, spec):
    """prox_{alpha r}(anchor - drift - (alpha/b) sum xi): the block update."""
    xi = np.asarray(xi, dtype=float)
    return spec.regularizer.prox(spec.alpha, spec.prox_argument(xi))


def inexactness_bound(eps_sub, alpha, b, mu_star):
    """alpha * eps_sub / (mu_star * b)."""
    return alpha * eps_sub / (mu_star * b)
