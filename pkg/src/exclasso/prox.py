"""Proximal mapping of the (weighted) exclusive lasso and its HS-Jacobian.

The prox of ``rho * ||w * x||_1^2`` has the closed form

    x = sign(a) * (|a| - 2 rho alpha_bar w)^+,

where ``alpha_bar = max_i s_i / (1 + 2 rho L_i)`` and ``s_i``, ``L_i`` are
running sums of ``w |a|`` and ``w^2`` taken in non-increasing order of
``|a| / w``. For the full regularizer every group is handled at once with a
segmented sort.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GroupPartition


@dataclass
class GroupProxResult:
    x: np.ndarray
    alpha_bar: float
    active_mask: np.ndarray
    signs: np.ndarray


def _check_weights(w, rho):
    if not np.all(w > 0):
        raise ValueError("weights must be strictly positive")
    if not rho > 0:
        raise ValueError("rho must be positive")


def _segmented_alpha_bar(abs_a, w, rho, group_of, offsets):
    """Per-group ``alpha_bar`` for the nonnegative problem.

    ``rho`` may be a scalar or an array with one value per group.
    """
    ratio = abs_a / w
    # stable: equal ratios stay in index order
    order = np.lexsort((-ratio, group_of))
    wa = (w * abs_a)[order]
    w2 = (w * w)[order]
    s = np.cumsum(wa)
    L = np.cumsum(w2)
    starts = offsets[:-1]
    if starts.size > 1:
        base_s = np.concatenate([[0.0], s[starts[1:] - 1]])
        base_L = np.concatenate([[0.0], L[starts[1:] - 1]])
        sizes = np.diff(offsets)
        s = s - np.repeat(base_s, sizes)
        L = L - np.repeat(base_L, sizes)
    rho_i = rho if np.isscalar(rho) else np.repeat(rho, np.diff(offsets))
    alpha = s / (1.0 + 2.0 * rho_i * L)
    return np.maximum.reduceat(alpha, starts)


def prox_sq_l1_nonneg(a, w, rho) -> GroupProxResult:
    """Minimize ``0.5 ||x - a||^2 + rho ||w * x||_1^2`` over ``x >= 0``.

    Parameters
    ----------
    a : array_like
        Nonnegative input.
    w : array_like
        Positive weights.
    rho : float
        Positive scale.
    """
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_weights(w, rho)
    if np.any(a < 0):
        raise ValueError("input must be nonnegative")
    return prox_sq_l1(a, w, rho)


def prox_sq_l1(a, w, rho) -> GroupProxResult:
    """Prox of ``rho * ||w * .||_1^2`` at an arbitrary ``a``."""
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_weights(w, rho)
    if a.shape != w.shape:
        raise ValueError("a and w must have the same shape")
    n = a.size
    abs_a = np.abs(a)
    alpha_bar = float(
        _segmented_alpha_bar(abs_a, w, rho, np.zeros(n, dtype=np.intp), np.array([0, n]))[0]
    )
    slack = abs_a - 2.0 * rho * alpha_bar * w
    active = slack > 0
    signs = np.sign(a)
    x = np.where(active, signs * slack, 0.0)
    return GroupProxResult(x, alpha_bar, active, signs)


def _nonneg_slack(x, nu, w, partition):
    abs_x = np.abs(x)
    alpha_bar = _segmented_alpha_bar(abs_x, w, nu, partition.group_of, partition.offsets)
    return abs_x - 2.0 * nu * alpha_bar[partition.group_of] * w


def prox_exclusive(x, nu, w, partition: GroupPartition) -> np.ndarray:
    """Prox of ``nu * sum_j ||w_gj * x_gj||_1^2``, groupwise."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    x = np.asarray(x, dtype=float)
    slack = _nonneg_slack(x, nu, w, partition)
    return np.where(slack > 0, np.sign(x) * slack, 0.0)


def moreau_env_exclusive(x, nu, w, partition, y=None) -> float:
    """Moreau envelope ``min_y nu * p(y) + 0.5 ||y - x||^2``.

    ``y`` may pass a precomputed ``prox_exclusive(x, nu, w, partition)``.
    """
    if y is None:
        y = prox_exclusive(x, nu, w, partition)
    d = y - x
    reg = float(np.sum(partition.group_sums(np.abs(w * y)) ** 2))
    return nu * reg + 0.5 * float(d @ d)


def hs_jacobian_group(a, w, rho):
    """The ``(xi, w_tilde, c)`` triple of the HS-Jacobian element.

    The element itself is ``Diag(xi) - c * outer(w_tilde, w_tilde)``.
    """
    res = prox_sq_l1(a, w, rho)
    xi = res.active_mask.astype(float)
    wt = res.signs * xi * np.asarray(w, dtype=float)
    c = 2.0 * rho / (1.0 + 2.0 * rho * float(wt @ wt))
    return xi, wt, c


@dataclass
class JacobianElement:
    """Block-diagonal HS-Jacobian of the exclusive lasso prox.

    Stored implicitly as a 0-1 mask, the signed active weights and one
    coefficient per group; in original feature order the element acts as
    ``d -> xi * d - coef[g] * wt * sum_{i in g} wt_i d_i``.
    """

    xi: np.ndarray
    wt: np.ndarray
    coef: np.ndarray
    partition: GroupPartition

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.xi)

    def matvec(self, d: np.ndarray) -> np.ndarray:
        part = self.partition
        proj = part.group_sums(self.wt * d)
        return self.xi * d - self.coef[part.group_of] * self.wt * proj[part.group_of]

    def toarray(self) -> np.ndarray:
        part = self.partition
        same = part.group_of[:, None] == part.group_of[None, :]
        M = np.where(same, -self.coef[part.group_of][:, None] * np.outer(self.wt, self.wt), 0.0)
        M[np.diag_indices_from(M)] += self.xi
        return M

    def group(self, j: int):
        g = self.partition.groups[j]
        return self.xi[g], self.wt[g], float(self.coef[j])


def hs_jacobian_exclusive(x, nu, w, partition: GroupPartition) -> JacobianElement:
    """HS-Jacobian element of ``prox_exclusive`` at ``x``.

    Each group uses the largest admissible active set, i.e. a coordinate
    is dropped exactly when its prox output is zero.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    slack = _nonneg_slack(x, nu, w, partition)
    xi = (slack > 0).astype(float)
    wt = np.sign(x) * xi * w
    coef = 2.0 * nu / (1.0 + 2.0 * nu * partition.group_sums(wt * wt))
    return JacobianElement(xi, wt, coef, partition)
