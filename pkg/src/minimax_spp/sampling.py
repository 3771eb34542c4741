"""Admissible minibatch sampling and SVRG corrections.

Batches are ordered index tuples. Each draw is a pure function of
``(seed, s, k)``: a Philox counter-based generator is keyed by that triple,
so streams do not depend on evaluation order.
"""
import itertools
from dataclasses import dataclass

import numpy as np

from .problem import GradientCache

__all__ = [
    "WITH_REPLACEMENT",
    "WITHOUT_REPLACEMENT",
    "SamplerConfig",
    "VarianceCorrection",
    "StaleCacheError",
    "make_rng",
    "draw_batch",
    "enumerate_batches",
    "svrg_correction",
    "drift_vectors",
    "variance_correction",
    "tau_factor",
    "variance_probe",
]

WITH_REPLACEMENT = "with"
WITHOUT_REPLACEMENT = "without"
_MODES = (WITH_REPLACEMENT, WITHOUT_REPLACEMENT)


class StaleCacheError(RuntimeError):
    """The cached full gradients were computed at a different reference point."""


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = WITHOUT_REPLACEMENT
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"sampling mode must be one of {_MODES}, got {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def validate(self, N):
        if self.batch_size > N and self.mode == WITHOUT_REPLACEMENT:
            raise ValueError(f"batch size {self.batch_size} exceeds N={N} without replacement")
        if self.batch_size > N:
            raise ValueError(f"batch size {self.batch_size} exceeds N={N}")


def make_rng(seed, *counter):
    """Philox generator keyed by (seed, *counter)."""
    key = [int(seed)] + [int(c) for c in counter]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def draw_batch(cfg, N, counter):
    """Ordered batch of ``cfg.batch_size`` indices in [0, N).

    ``counter`` is an int or a tuple such as ``(s, k)``.
    """
    cfg.validate(N)
    counter = counter if isinstance(counter, tuple) else (counter,)
    rng = make_rng(cfg.seed, *counter)
    if cfg.mode == WITH_REPLACEMENT:
        return rng.integers(0, N, size=cfg.batch_size)
    return rng.permutation(N)[: cfg.batch_size]


def enumerate_batches(mode, N, b):
    """All equally likely ordered batches for the given mode."""
    if mode == WITH_REPLACEMENT:
        return [np.array(t) for t in itertools.product(range(N), repeat=b)]
    return [np.array(t) for t in itertools.permutations(range(N), b)]


@dataclass
class VarianceCorrection:
    v_x: np.ndarray
    v_y: np.ndarray
    hat_v_x: np.ndarray
    hat_v_y: np.ndarray


def svrg_correction(p, batch, x_ref, y_ref, cache):
    """SVRG control variates at the reference point.

    v_x = gx(ref) - gx_S(ref) and v_y = -gy(ref) + gy_S(ref), where gx, gy are
    the gradients of phi^x_y and phi^y_x and the subscript S denotes the batch
    average (repeats counted).
    """
    if not isinstance(cache, GradientCache) or not cache.matches(x_ref, y_ref):
        raise StaleCacheError("cached full gradients do not belong to the given reference point")
    gx_b, gy_b = p.batch_gradients(batch, x_ref, y_ref)
    return cache.gx - gx_b, -cache.gy + gy_b


def drift_vectors(v_x, v_y, lam, alpha, A, B):
    """(alpha (v_x + A'lam), -alpha (v_y + B'lam))."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return alpha * (v_x + A.T @ lam), -alpha * (v_y + B.T @ lam)


def variance_correction(p, batch, state, alpha):
    v_x, v_y = svrg_correction(p, batch, state.x_ref, state.y_ref, state.cache)
    hx, hy = drift_vectors(v_x, v_y, state.lam, alpha, p.A, p.B)
    return VarianceCorrection(v_x, v_y, hx, hy)


def tau_factor(mode, N, b):
    """Finite-population factor: 1 with replacement, (N - b)/(N - 1) without."""
    if not 1 <= b <= N:
        raise ValueError("need 1 <= b <= N")
    if mode == WITH_REPLACEMENT:
        return 1.0
    if N == 1:
        return 0.0
    return (N - b) / (N - 1)


def variance_probe(p, cfg, x, y, x_ref, y_ref, trials=1000, counter_base=0):
    """Monte-Carlo mean squared error of the SVRG gradient estimators.

    The x-estimator is gx_S(x, y) - gx_S(ref) + gx(ref); its target is gx(x, y).
    The y-estimator is built the same way from gy. Returns a dict with the
    empirical values, the bounds (L_bar^2 tau / b) D^2 with
    D^2 = ||x - x_ref||^2 + ||y - y_ref||^2, and the mean unbiased sample
    variance s^2 of the per-component differences (diagnostic only).
    All batches are drawn from the single stream (cfg.seed, counter_base).
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    N, b = p.N, cfg.batch_size
    allidx = np.arange(N)
    zx = p.grad_x_rows(allidx, x, y) - p.grad_x_rows(allidx, x_ref, y_ref)
    zy = p.grad_y_rows(allidx, x, y) - p.grad_y_rows(allidx, x_ref, y_ref)
    mx, my = zx.mean(axis=0), zy.mean(axis=0)
    # one stream for all draws; chunks bound the memory of the index array
    rng = make_rng(cfg.seed, counter_base)
    ex, ey, s2 = [], [], []
    for start in range(0, trials, 1000):
        t = min(1000, trials - start)
        if cfg.mode == WITH_REPLACEMENT:
            idx = rng.integers(0, N, size=(t, b))
        else:
            idx = rng.permuted(np.tile(np.arange(N), (t, 1)), axis=1)[:, :b]
        wx, wy = zx[idx], zy[idx]
        dx = wx.mean(axis=1) - mx
        dy = wy.mean(axis=1) - my
        ex.append(np.sum(dx * dx, axis=1))
        ey.append(np.sum(dy * dy, axis=1))
        if b > 1:
            s2.append(np.sum((wx - wx.mean(axis=1, keepdims=True)) ** 2, axis=(1, 2)) / (b - 1))
        else:
            s2.append(np.zeros(t))
    ex, ey, s2 = np.concatenate(ex), np.concatenate(ey), np.concatenate(s2)
    tau = tau_factor(cfg.mode, N, b)
    D2 = float(np.sum((x - x_ref) ** 2) + np.sum((y - y_ref) ** 2))
    return {
        "empirical_x": float(ex.mean()),
        "empirical_y": float(ey.mean()),
        "bound_x": p.L_phi_x ** 2 * tau / b * D2,
        "bound_y": p.L_phi_y ** 2 * tau / b * D2,
        "tau": tau,
        "dist_sq": D2,
        "sample_variance_x": float(s2.mean()),
        "trials": trials,
    }
