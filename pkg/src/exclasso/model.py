"""Problem representation and group bookkeeping.

All feature indices are 0-based throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

LOSSES = ("squared", "logistic")


class PartitionError(ValueError):
    """Raised when a set of groups is not a partition of ``range(n)``."""


@dataclass(frozen=True, eq=False)
class GroupPartition:
    """Disjoint index groups covering ``range(n)``.

    Attributes
    ----------
    groups : tuple of int arrays
        Feature indices of each group, in the order they were given.
    perm : int array
        ``x[perm]`` lays the groups out contiguously, group ``j`` occupying
        ``offsets[j]:offsets[j + 1]``.
    offsets : int array
        Cumulative group sizes, ``offsets[0] == 0``.
    group_of : int array
        Group number of every feature.
    """

    groups: tuple
    perm: np.ndarray
    offsets: np.ndarray
    group_of: np.ndarray

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def inverse_perm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv

    def to_blocks(self, x: np.ndarray) -> np.ndarray:
        """Reorder ``x`` so that groups are contiguous."""
        return np.asarray(x)[self.perm]

    def from_blocks(self, y: np.ndarray) -> np.ndarray:
        out = np.empty_like(y)
        out[self.perm] = y
        return out

    def group_sums(self, v: np.ndarray) -> np.ndarray:
        return np.bincount(self.group_of, weights=v, minlength=self.n_groups)

    def labels(self) -> np.ndarray:
        """1-based group id per feature (the on-disk groups format)."""
        return self.group_of + 1

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "GroupPartition":
        """Build a partition from one group label per feature.

        Groups are ordered by sorted label value.
        """
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.size == 0:
            raise PartitionError("labels must be a non-empty 1-d sequence")
        uniq, inv = np.unique(labels, return_inverse=True)
        order = np.argsort(inv, kind="stable")
        counts = np.bincount(inv, minlength=uniq.size)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        groups = tuple(order[offsets[j]:offsets[j + 1]] for j in range(uniq.size))
        return cls(groups, order, offsets, inv.astype(np.intp))

    @classmethod
    def contiguous(cls, sizes: Sequence[int]) -> "GroupPartition":
        return cls.from_labels(np.repeat(np.arange(len(sizes)), sizes))

    def __eq__(self, other):
        if not isinstance(other, GroupPartition):
            return NotImplemented
        return len(self.groups) == len(other.groups) and all(
            np.array_equal(a, b) for a, b in zip(self.groups, other.groups)
        )

    def __repr__(self):
        return f"GroupPartition(n={self.n}, n_groups={self.n_groups})"


def validate_partition(groups: Sequence[Sequence[int]], n: int) -> GroupPartition:
    """Check that ``groups`` is a disjoint cover of ``range(n)``.

    Returns the corresponding :class:`GroupPartition`; raises
    :class:`PartitionError` on an empty group, an out-of-range index,
    overlapping groups, or an uncovered index.
    """
    groups = [np.asarray(g, dtype=np.intp).ravel() for g in groups]
    if not groups:
        raise PartitionError("no groups given")
    owner = np.full(n, -1, dtype=np.intp)
    for j, g in enumerate(groups):
        if g.size == 0:
            raise PartitionError(f"group {j} is empty")
        if g.min() < 0 or g.max() >= n:
            raise PartitionError(f"group {j} has indices outside [0, {n})")
        if np.unique(g).size != g.size:
            raise PartitionError(f"group {j} repeats an index")
        clash = owner[g] >= 0
        if clash.any():
            i = int(g[clash][0])
            raise PartitionError(f"index {i} is in groups {owner[i]} and {j}")
        owner[g] = j
    missing = np.flatnonzero(owner < 0)
    if missing.size:
        raise PartitionError(f"index {missing[0]} is not covered by any group")
    perm = np.concatenate(groups)
    offsets = np.concatenate([[0], np.cumsum([g.size for g in groups])])
    return GroupPartition(tuple(groups), perm, offsets, owner)


@dataclass(frozen=True, eq=False)
class Problem:
    """``min_x h(Ax) - <c, x> + lam * sum_j ||w_gj * x_gj||_1^2``.

    ``A`` may be a dense array or any scipy sparse matrix; solvers only use
    products with ``A`` and ``A.T`` plus column slicing.
    """

    A: np.ndarray | sp.spmatrix
    b: np.ndarray
    partition: GroupPartition
    lam: float = 1.0
    loss: str = "squared"
    w: np.ndarray | None = None
    c: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = self.A
        if sp.issparse(A):
            A = sp.csr_matrix(A, dtype=float)
        else:
            A = np.asarray(A, dtype=float)
            if A.ndim != 2:
                raise ValueError("A must be 2-d")
        m, n = A.shape
        b = np.asarray(self.b, dtype=float).ravel()
        w = np.ones(n) if self.w is None else np.asarray(self.w, dtype=float).ravel()
        c = np.zeros(n) if self.c is None else np.asarray(self.c, dtype=float).ravel()
        if b.size != m:
            raise ValueError(f"b has length {b.size}, expected {m}")
        if w.size != n or c.size != n:
            raise ValueError("w and c must have one entry per feature")
        if not np.all(w > 0):
            raise ValueError("weights must be strictly positive")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.loss == "logistic" and not np.all(np.abs(b) == 1):
            raise ValueError("logistic labels must be -1 or +1")
        if self.partition.n != n:
            raise ValueError(f"partition covers {self.partition.n} features, A has {n}")
        for name, val in (("A", A), ("b", b), ("w", w), ("c", c)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A)

    def with_lambda(self, lam: float) -> "Problem":
        # the spectral estimate does not depend on lam, share it
        return replace(self, lam=lam, _cache=self._cache)

    def columns(self, idx: np.ndarray):
        """``A[:, idx]`` for either storage."""
        if self.is_sparse:
            if "csc" not in self._cache:
                self._cache["csc"] = self.A.tocsc()
            return self._cache["csc"][:, idx]
        return self.A[:, idx]

    def lambda_max_AAt(self) -> float:
        """Largest eigenvalue of ``A A^T`` (cached)."""
        if "lmax" not in self._cache:
            self._cache["lmax"] = power_method(self.A)
        return self._cache["lmax"]

    def regularizer(self, x: np.ndarray) -> float:
        return exclusive_norm(x, self.w, self.partition)

    def smooth_grad(self, x: np.ndarray, Ax: np.ndarray | None = None) -> np.ndarray:
        """Gradient of ``h(Ax) - <c, x>``."""
        from .loss import loss_grad

        if Ax is None:
            Ax = self.A @ x
        return self.A.T @ loss_grad(self.loss, self.b, Ax) - self.c

    def objective(self, x: np.ndarray, Ax: np.ndarray | None = None) -> float:
        from .loss import loss_value

        if Ax is None:
            Ax = self.A @ x
        return loss_value(self.loss, self.b, Ax) - self.c @ x + self.lam * self.regularizer(x)


def exclusive_norm(x: np.ndarray, w: np.ndarray, partition: GroupPartition) -> float:
    """``sum_j ||w_gj * x_gj||_1^2``."""
    return float(np.sum(partition.group_sums(np.abs(w * x)) ** 2))


def power_method(A, iters: int = 100, rtol: float = 1e-4, seed: int = 0) -> float:
    """Estimate ``lambda_max(A A^T)`` by power iteration on ``A^T A``."""
    n = A.shape[1]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        u = A.T @ (A @ v)
        new = float(np.linalg.norm(u))
        if new == 0.0:
            return 0.0
        v = u / new
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return est


def restrict_problem(problem: Problem, index_set) -> Problem:
    """Problem over the features in ``index_set``, with emptied groups dropped."""
    idx = np.asarray(index_set, dtype=np.intp).ravel()
    if idx.size == 0:
        raise ValueError("index set is empty")
    if np.any(np.diff(idx) <= 0):
        idx = np.unique(idx)
    if idx[0] < 0 or idx[-1] >= problem.n:
        raise ValueError("index set out of range")
    labels = problem.partition.group_of[idx]
    part = GroupPartition.from_labels(labels)
    return Problem(
        problem.columns(idx),
        problem.b,
        part,
        lam=problem.lam,
        loss=problem.loss,
        w=problem.w[idx],
        c=problem.c[idx],
    )


def embed_solution(z: np.ndarray, index_set, n: int) -> np.ndarray:
    """Zero-padded extension of ``z`` from ``index_set`` to length ``n``."""
    z = np.asarray(z, dtype=float).ravel()
    idx = np.asarray(index_set, dtype=np.intp).ravel()
    if z.size != idx.size:
        raise ValueError(f"z has length {z.size} but index set has {idx.size}")
    x = np.zeros(n)
    x[idx] = z
    return x


@dataclass
class Solution:
    x: np.ndarray
    kkt_residual: float
    objective: float

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.x)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.x))

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "eta_kkt": self.kkt_residual,
            "objective": self.objective,
            "nnz": self.nnz,
        }


@dataclass
class SolverReport:
    solver: str
    status: str = "max-iter"
    outer_iters: int = 0
    total_inner_iters: int = 0
    wall_time: float = 0.0
    residual_history: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "status": self.status,
            "outer_iters": self.outer_iters,
            "inner_iters": self.total_inner_iters,
            "time_s": self.wall_time,
            "residual_history": [[int(k), float(r)] for k, r in self.residual_history],
        }
