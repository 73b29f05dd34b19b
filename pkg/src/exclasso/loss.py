"""Squared and logistic losses, their proximal maps and prox Jacobians.

Both losses are separable, so Hessians and prox Jacobians are returned as
diagonals.
"""

import numpy as np
from scipy.special import expit

LOGISTIC_TOL = 1e-12


def _check(kind, b, y):
    if kind not in ("squared", "logistic"):
        raise ValueError(f"unknown loss {kind!r}")
    if np.shape(b) != np.shape(y):
        raise ValueError(f"length mismatch: {np.shape(b)} vs {np.shape(y)}")


def loss_value(kind: str, b: np.ndarray, y: np.ndarray) -> float:
    _check(kind, b, y)
    if kind == "squared":
        r = y - b
        return 0.5 * float(r @ r)
    # log(1 + exp(-t)) without overflow
    return float(np.sum(np.logaddexp(0.0, -b * y)))


def loss_grad(kind: str, b: np.ndarray, y: np.ndarray) -> np.ndarray:
    _check(kind, b, y)
    if kind == "squared":
        return y - b
    return -b * expit(-b * y)


def loss_hess_diag(kind: str, b: np.ndarray, y: np.ndarray) -> np.ndarray:
    _check(kind, b, y)
    if kind == "squared":
        return np.ones_like(y)
    t = b * y
    return expit(-t) * expit(t)


def hessian_bound(kind: str) -> float:
    """Global upper bound on the loss curvature."""
    return 1.0 if kind == "squared" else 0.25


def _logistic_prox(z, b, nu):
    """Solve ``v - z - nu * b * expit(-b * v) = 0`` coordinatewise.

    Safeguarded Newton on the bracket ``[z - nu, z + nu]``; the map is
    strictly increasing so the root is unique.
    """
    lo = z - nu
    hi = z + nu
    v = z.copy()
    width = hi - lo
    for _ in range(200):
        s = expit(-b * v)
        f = v - z - nu * b * s
        fp = 1.0 + nu * s * (1.0 - s)
        # for large nu, f is only resolved to about nu * ulp(v); test the Newton step
        done = ((np.abs(f) <= LOGISTIC_TOL * fp * (1.0 + np.abs(v)))
                | (hi - lo <= 4 * np.spacing(np.abs(v) + 1.0)))
        if done.all():
            break
        lo = np.where(f < 0, v, lo)
        hi = np.where(f > 0, v, hi)
        step = v - f / fp
        # bisect when Newton leaves the bracket or the bracket stops halving
        slow = (hi - lo) > 0.5 * width
        width = hi - lo
        outside = (step <= lo) | (step >= hi) | slow
        v = np.where(outside, 0.5 * (lo + hi), step)
    else:
        raise RuntimeError("logistic prox did not converge")
    return v


def prox_h(kind: str, b: np.ndarray, z: np.ndarray, nu: float) -> np.ndarray:
    """``argmin_v nu * h(v) + 0.5 * ||v - z||^2``."""
    _check(kind, b, z)
    if not nu > 0:
        raise ValueError("nu must be positive")
    if kind == "squared":
        return (z + nu * b) / (1.0 + nu)
    return _logistic_prox(np.asarray(z, dtype=float), b, nu)


def prox_h_jacobian_diag(kind, b, z, nu, v=None):
    """Diagonal of ``(I + nu * hess h(prox(z)))^{-1}``.

    ``v`` may pass a precomputed ``prox_h(kind, b, z, nu)``.
    """
    if kind == "squared":
        return np.full(np.shape(z), 1.0 / (1.0 + nu))
    if v is None:
        v = prox_h(kind, b, z, nu)
    return 1.0 / (1.0 + nu * loss_hess_diag(kind, b, v))


def moreau_env_h(kind, b, z, nu, v=None) -> float:
    """``nu * h(v) + 0.5 * ||v - z||^2`` at ``v = prox_h(z)``."""
    if v is None:
        v = prox_h(kind, b, z, nu)
    d = v - z
    return nu * loss_value(kind, b, v) + 0.5 * float(d @ d)
