"""Random quadratic-bilinear instances for rate measurements."""
import numpy as np

from ..problem import ProblemSpec, QuadraticFamily
from ..sampling import make_rng

__all__ = ["gen_quadratic"]


def gen_quadratic(n=20, m_dim=20, q=5, N=50, seed=0, spread=0.1, k_scale=0.05,
                  a_scale=0.1, b_scale=1.5):
    """Well-conditioned quadratic instance with phi = psi = 0.

    Components have diagonal curvatures 1 + spread * U[0, 1), Gaussian linear
    terms and a weak bilinear coupling of size ``k_scale``. The constraint
    acts mostly on y (``b_scale`` >> ``a_scale``); with the multiplier step
    lambda <- lambda - alpha (Ax + By + c) this is the regime in which the
    iteration is contractive.
    """
    rng = make_rng(seed, 0)
    P = np.stack([np.diag(1.0 + spread * rng.random(n)) for _ in range(N)])
    Q = np.stack([np.diag(1.0 + spread * rng.random(m_dim)) for _ in range(N)])
    K = k_scale * rng.normal(size=(N, m_dim, n)) / np.sqrt(n)
    p = rng.normal(size=(N, n))
    qv = rng.normal(size=(N, m_dim))
    A = a_scale * rng.normal(size=(q, n)) / np.sqrt(n)
    B = b_scale * rng.normal(size=(q, m_dim)) / np.sqrt(m_dim)
    c = rng.normal(size=q)
    prob = ProblemSpec(QuadraticFamily(P, p, Q, qv, K), A, B, c)
    prob.meta.update(kind="quadratic", seed=int(seed))
    return prob
