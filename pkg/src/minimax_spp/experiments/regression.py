"""Linearly constrained regression saddle problem.

    min_x max_y  (lam/2)||x||^2 + (1/m)[ -||y||^2/2 - b'y + (1/N) sum_i y'K_i x ]
    s.t.         A x + B y + c = 0

with lam = 1/m, b = 0, c = 0 and Gaussian K_i, A, B of standard deviation sigma.
"""
import numpy as np

from ..problem import ProblemSpec, QuadraticFamily
from ..sampling import make_rng

__all__ = ["gen_regression"]


def gen_regression(n=20, m_dim=20, p=10, N=50, sigma=0.01, seed=0):
    """Regression instance as a :class:`ProblemSpec` (phi = psi = 0)."""
    if min(n, m_dim, p, N) < 1:
        raise ValueError("dimensions must be positive")
    rng = make_rng(seed, 1)
    K = rng.normal(0.0, sigma, size=(N, m_dim, n))
    A = rng.normal(0.0, sigma, size=(p, n))
    B = rng.normal(0.0, sigma, size=(p, m_dim))
    lam = 1.0 / m_dim
    fam = QuadraticFamily(lam * np.eye(n), np.zeros(n), np.eye(m_dim) / m_dim, np.zeros(m_dim), K / m_dim)
    prob = ProblemSpec(fam, A, B, np.zeros(p))
    prob.meta.update(kind="regression", sigma=sigma, seed=int(seed), lam=lam)
    return prob
