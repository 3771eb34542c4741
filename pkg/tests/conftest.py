import numpy as np
import pytest

from minimax_spp.problem import ProblemSpec, QuadraticFamily
from minimax_spp.prox import Zero


def make_quadratic(seed=0, n=4, m=3, q=2, N=5, phi=None, psi=None, shared=False):
    """Small random quadratic-bilinear instance (per-component curvatures unless ``shared``)."""
    rng = np.random.default_rng(seed)

    def spd(d):
        G = rng.standard_normal((d, d))
        return G @ G.T / d + np.eye(d)

    if shared:
        P, Q = spd(n), spd(m)
        p, qv = rng.standard_normal(n), rng.standard_normal(m)
    else:
        P = np.stack([spd(n) for _ in range(N)])
        Q = np.stack([spd(m) for _ in range(N)])
        p, qv = rng.standard_normal((N, n)), rng.standard_normal((N, m))
    K = 0.5 * rng.standard_normal((N, m, n))
    fam = QuadraticFamily(P, p, Q, qv, K)
    return ProblemSpec(fam, rng.standard_normal((q, n)), rng.standard_normal((q, m)), rng.standard_normal(q),
                       phi=phi or Zero(), psi=psi or Zero())


@pytest.fixture
def quad():
    return make_quadratic()


def pytest_terminal_summary(terminalreporter, config):
    from oracles import ACCEPTANCE_LINES as lines

    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][3:])):
            terminalreporter.write_line(line)
