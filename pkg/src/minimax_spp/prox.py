"""Proximal operators, Moreau envelopes and prox Jacobian elements.

The catalog is closed: :class:`Zero`, :class:`ScaledL1`, :class:`BoxIndicator`
and :class:`SquaredL2`. Every kind implements the value, the prox, the
conjugate prox and one element of the generalized Jacobian of the prox, so the
Newton subsolver can rely on the three being consistent.

Generalized Jacobian elements are returned as diagonals (1-D arrays with
entries in [0, 1]). At kinks the inactive branch (0) is taken.
"""
import numpy as np

__all__ = [
    "Regularizer",
    "Zero",
    "ScaledL1",
    "BoxIndicator",
    "SquaredL2",
    "prox_eval",
    "moreau_envelope",
    "prox_jacobian_element",
    "moreau_identity_check",
    "regularizer_from_json",
]


def _check_alpha(alpha):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")


class Regularizer:
    """Base class for the prox-friendly regularizers."""

    kind = "base"

    def value(self, z):
        raise NotImplementedError

    def prox(self, alpha, v):
        raise NotImplementedError

    def conj_prox(self, t, w):
        """Prox of ``t * r*`` evaluated at ``w``."""
        raise NotImplementedError

    def jacobian_diag(self, alpha, v):
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()

    def __repr__(self):
        return f"{type(self).__name__}({self.to_json()})"


class Zero(Regularizer):
    kind = "zero"

    def value(self, z):
        return 0.0

    def prox(self, alpha, v):
        return np.array(v, dtype=float, copy=True)

    def conj_prox(self, t, w):
        # r* is the indicator of {0}
        return np.zeros_like(np.asarray(w, dtype=float))

    def jacobian_diag(self, alpha, v):
        return np.ones(np.shape(v))

    def to_json(self):
        return {"kind": "zero"}


class ScaledL1(Regularizer):
    kind = "l1"

    def __init__(self, weight=1.0):
        if weight < 0:
            raise ValueError("l1 weight must be nonnegative")
        self.weight = float(weight)

    def value(self, z):
        return self.weight * float(np.sum(np.abs(z)))

    def prox(self, alpha, v):
        v = np.asarray(v, dtype=float)
        thr = alpha * self.weight
        return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)

    def conj_prox(self, t, w):
        # r* is the indicator of the weight-ball in the max norm
        return np.clip(np.asarray(w, dtype=float), -self.weight, self.weight)

    def jacobian_diag(self, alpha, v):
        return (np.abs(np.asarray(v, dtype=float)) > alpha * self.weight).astype(float)

    def to_json(self):
        return {"kind": "l1", "weight": self.weight}


class BoxIndicator(Regularizer):
    """Indicator of ``{lo <= z <= hi}``; bounds may be infinite."""

    kind = "box"

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have equal shapes")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        self.lo = lo
        self.hi = hi

    def value(self, z):
        z = np.asarray(z, dtype=float)
        if np.all(z >= self.lo) and np.all(z <= self.hi):
            return 0.0
        return np.inf

    def prox(self, alpha, v):
        return np.clip(np.asarray(v, dtype=float), self.lo, self.hi)

    def conj_prox(self, t, w):
        # r* is the support function sum_j max(lo_j xi_j, hi_j xi_j)
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        up = w > t * self.hi
        dn = w < t * self.lo
        out[up] = w[up] - t * self.hi[up]
        out[dn] = w[dn] - t * self.lo[dn]
        return out

    def jacobian_diag(self, alpha, v):
        v = np.asarray(v, dtype=float)
        return ((v > self.lo) & (v < self.hi)).astype(float)

    def to_json(self):
        def enc(a):
            return [None if not np.isfinite(t) else float(t) for t in a]

        return {"kind": "box", "lo": enc(self.lo), "hi": enc(self.hi)}


class SquaredL2(Regularizer):
    """``(weight / 2) * ||z||^2``."""

    kind = "sql2"

    def __init__(self, weight=1.0):
        if weight < 0:
            raise ValueError("squared l2 weight must be nonnegative")
        self.weight = float(weight)

    def value(self, z):
        return 0.5 * self.weight * float(np.dot(np.ravel(z), np.ravel(z)))

    def prox(self, alpha, v):
        return np.asarray(v, dtype=float) / (1.0 + alpha * self.weight)

    def conj_prox(self, t, w):
        w = np.asarray(w, dtype=float)
        if self.weight == 0.0:
            return np.zeros_like(w)
        return self.weight * w / (self.weight + t)

    def jacobian_diag(self, alpha, v):
        return np.full(np.shape(v), 1.0 / (1.0 + alpha * self.weight))

    def to_json(self):
        return {"kind": "sql2", "weight": self.weight}


def regularizer_from_json(doc):
    """Inverse of ``Regularizer.to_json``; ``null`` box bounds mean infinite."""
    if doc is None:
        return Zero()
    kind = doc.get("kind")
    if kind == "zero":
        return Zero()
    if kind == "l1":
        return ScaledL1(doc.get("weight", 1.0))
    if kind == "sql2":
        return SquaredL2(doc.get("weight", 1.0))
    if kind == "box":
        lo = [-np.inf if t is None else t for t in doc["lo"]]
        hi = [np.inf if t is None else t for t in doc["hi"]]
        return BoxIndicator(lo, hi)
    raise ValueError(f"unknown regularizer kind {kind!r}")


def prox_eval(r, alpha, v):
    """argmin_z r(z) + ||v - z||^2 / (2 alpha)."""
    _check_alpha(alpha)
    return r.prox(alpha, v)


def moreau_envelope(r, alpha, v):
    """min_z r(z) + ||v - z||^2 / (2 alpha); its gradient is (v - prox) / alpha."""
    _check_alpha(alpha)
    v = np.asarray(v, dtype=float)
    z = r.prox(alpha, v)
    d = v - z
    return r.value(z) + float(np.dot(d.ravel(), d.ravel())) / (2.0 * alpha)


def prox_jacobian_element(r, alpha, v):
    """Diagonal of one element of the generalized Jacobian of prox_{alpha r} at v."""
    _check_alpha(alpha)
    return r.jacobian_diag(alpha, v)


def moreau_identity_check(r, alpha, v):
    """||prox_{alpha r}(v) + alpha prox_{r*/alpha}(v / alpha) - v||."""
    _check_alpha(alpha)
    v = np.asarray(v, dtype=float)
    res = r.prox(alpha, v) + alpha * r.conj_prox(1.0 / alpha, v / alpha) - v
    return float(np.linalg.norm(res))
