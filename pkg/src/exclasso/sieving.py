"""Adaptive sieving for solution paths of the exclusive lasso.

Reduced problems are solved on a guessed index set ``I``; features outside
``I`` whose gradient violates the (slightly inflated) optimality interval
are added back until the full proximal residual drops below ``eps``.

Tolerances are relative: for an iterate ``x`` the absolute budget is
``eps * (1 + ||x|| + ||grad Phi(x)||)``, so a finished ``x`` satisfies
``eta_kkt(x) <= eps``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import Problem, Solution, embed_solution, restrict_problem
from .ppdna import PpdnaConfig, kkt_residual, polish_solution, ppdna_solve
from .ppdna import proximal_residual as _residual_vector

log = logging.getLogger(__name__)

__all__ = [
    "SieveError",
    "SieveState",
    "PathResult",
    "proximal_residual",
    "correlation_init",
    "sieve_candidates",
    "solve_reduced",
    "as_path",
    "solve_path",
]


class SieveError(RuntimeError):
    """Raised when a lambda exceeds its round cap."""


def proximal_residual(problem: Problem, x, Ax=None):
    """``(||R(x)||, R(x))`` with ``R(x) = x - Prox_{lam p}(x - grad Phi(x))``."""
    r, _ = _residual_vector(problem, np.asarray(x, dtype=float), Ax)
    return float(np.linalg.norm(r)), r


@dataclass
class SieveState:
    lam: float
    active: np.ndarray
    round: int = 0
    x_current: np.ndarray | None = None
    residual: float = np.inf
    rounds_history: list = field(default_factory=list)  # (round, |I|, |J|, residual)


@dataclass
class PathResult:
    lambdas: np.ndarray
    solutions: list
    sieve_stats: list
    timing: list
    outer_iters: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    strategy: str = "as"
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def reduced_sizes(self, i: int) -> list:
        return [int(h[1]) for h in self.sieve_stats[i]]

    def records(self) -> list:
        out = []
        for i, lam in enumerate(self.lambdas):
            sol = self.solutions[i]
            out.append({
                "lambda": float(lam),
                "objective": float(sol.objective),
                "eta_kkt": float(sol.kkt_residual),
                "nnz": sol.nnz,
                "time_s": float(self.timing[i]),
                "outer_iters": int(self.outer_iters[i]),
                "inner_iters": int(self.inner_iters[i]),
                "sieve_rounds": len(self.sieve_stats[i]),
                "reduced_sizes": self.reduced_sizes(i),
            })
        return out


def correlation_init(problem: Problem, size: int | None = None) -> np.ndarray:
    """Indices of the ``ceil(sqrt(n))`` features most correlated with ``b``.

    Scores are ``|<a_i, b>| / (||a_i|| ||b||)`` with zero columns scoring 0;
    ties go to the smaller index. Returned sorted.
    """
    A, b = problem.A, problem.b
    n = problem.n
    k = int(math.ceil(math.sqrt(n))) if size is None else int(size)
    k = min(max(k, 1), n)
    bn = float(np.linalg.norm(b))
    if bn == 0:
        raise ValueError("b must be nonzero")
    if problem.is_sparse:
        norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=0)).ravel())
    else:
        norms = np.linalg.norm(A, axis=0)
    dots = np.abs(A.T @ b)
    score = np.zeros(n)
    nz = norms > 0
    score[nz] = dots[nz] / (norms[nz] * bn)
    order = np.lexsort((np.arange(n), -score))
    return np.sort(order[:k])


def sieve_candidates(problem: Problem, x, active, eps: float, grad=None) -> np.ndarray:
    """Features outside ``active`` that violate the optimality interval.

    ``j`` is returned when ``|grad_j| > 2 lam ||w_g x_g||_1 w_j + eps / sqrt(2 |comp|)``
    with ``g`` the group of ``j`` and ``comp`` the complement of ``active``.
    ``eps`` is an absolute residual bound.
    """
    x = np.asarray(x, dtype=float)
    n = problem.n
    mask = np.ones(n, dtype=bool)
    mask[np.asarray(active, dtype=np.intp)] = False
    comp = np.flatnonzero(mask)
    if comp.size == 0:
        return comp
    if grad is None:
        grad = problem.smooth_grad(x)
    part = problem.partition
    gnorm = part.group_sums(np.abs(problem.w * x))  # cached per round
    bound = (2.0 * problem.lam * gnorm[part.group_of[comp]] * problem.w[comp]
             + eps / math.sqrt(2.0 * comp.size))
    return comp[np.abs(grad[comp]) > bound]


def solve_reduced(problem: Problem, active, inner_tol: float, config: PpdnaConfig | None = None,
                  x0=None, u0=None):
    """Solve the problem restricted to ``active`` to relative tolerance ``inner_tol``.

    Returns ``(z, x, report)`` with ``x`` the zero-padded embedding of ``z``.
    ``x0`` is a full-length warm start.
    """
    idx = np.unique(np.asarray(active, dtype=np.intp))
    if idx.size == 0:
        raise ValueError("active set is empty")
    sub = problem if idx.size == problem.n else restrict_problem(problem, idx)
    cfg = config or PpdnaConfig()
    cfg = PpdnaConfig(**{**cfg.__dict__, "tol": inner_tol})
    z0 = None if x0 is None else np.asarray(x0, dtype=float)[idx]
    sol, report = ppdna_solve(sub, cfg, x0=z0, u0=u0)
    return sol.x, embed_solution(sol.x, idx, problem.n), report


def _sieve_one(problem, active, eps, config, x0, round_cap, state):
    """Sieving rounds for one lambda; mutates ``state``."""
    outer = inner = 0
    tol = eps / math.sqrt(2.0)
    n = problem.n
    while True:
        if state.round >= round_cap:
            raise SieveError(f"lambda={problem.lam:g}: more than {round_cap} sieving rounds")
        state.round += 1
        # the dual iterate of another reduced problem is a poor start; only x is reused
        _, x, rep = solve_reduced(problem, active, tol, config, x0=x0)
        outer += rep.outer_iters
        inner += rep.total_inner_iters
        Ax = problem.A @ x
        r, grad = _residual_vector(problem, x, Ax)
        rnorm = float(np.linalg.norm(r))
        eps_abs = eps * (1.0 + np.linalg.norm(x) + np.linalg.norm(grad))
        state.x_current, state.residual = x, rnorm
        if rnorm <= eps_abs:
            state.rounds_history.append((state.round, int(active.size), 0, rnorm))
            if config is not None and config.polish:
                # the inflated sieve test may leave weak violators out of I
                x, _ = polish_solution(problem, x)
                Ax = problem.A @ x
                state.x_current = x
                state.active = np.union1d(active, np.flatnonzero(x))
            return x, Ax, outer, inner
        J = sieve_candidates(problem, x, active, eps_abs, grad)
        state.rounds_history.append((state.round, int(active.size), int(J.size), rnorm))
        if J.size == 0:
            # reduced solve too loose for the termination argument
            tol = tol / 10
            log.debug("empty sieve at residual %.3e; tightening to %.1e", rnorm, tol)
            if tol < 1e-15:
                raise SieveError("cannot reach the requested residual")
        else:
            active = np.union1d(active, J)
            state.active = active
        x0 = x


def as_path(problem: Problem, lambdas, eps: float = 1e-6, config: PpdnaConfig | None = None,
            round_cap: int = 100, init: str = "correlation", raise_on_failure: bool = False) -> PathResult:
    """Solution path over a decreasing ``lambdas`` grid with adaptive sieving.

    The first index set comes from :func:`correlation_init` (or the full set
    with ``init="full"``); later ones are the support of the previous
    solution. ``eps`` is a relative KKT tolerance.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0 or np.any(lambdas <= 0):
        raise ValueError("lambdas must be a nonempty positive sequence")
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambdas must be strictly decreasing")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    n = problem.n
    res = PathResult(lambdas, [], [], [], strategy="as")
    x_prev = None
    for i, lam in enumerate(lambdas):
        P = problem.with_lambda(lam)
        t0 = time.perf_counter()
        if x_prev is not None and np.any(x_prev):
            active = np.flatnonzero(x_prev)
        elif init == "full":
            active = np.arange(n)
        else:
            active = correlation_init(P)
        state = SieveState(lam, active)
        try:
            x, Ax, outer, inner = _sieve_one(P, active, eps, config, x_prev, round_cap, state)
        except SieveError as exc:
            if raise_on_failure:
                raise
            res.failures.append((float(lam), str(exc)))
            x = state.x_current if state.x_current is not None else np.zeros(n)
            Ax = P.A @ x
            outer = inner = 0
        res.timing.append(time.perf_counter() - t0)
        res.solutions.append(Solution(x, kkt_residual(P, x, Ax), P.objective(x, Ax)))
        res.sieve_stats.append(state.rounds_history)
        res.outer_iters.append(outer)
        res.inner_iters.append(inner)
        x_prev = x
    return res


def solve_path(problem: Problem, lambdas, strategy: str = "as", eps: float = 1e-6,
               config: PpdnaConfig | None = None, **kw) -> PathResult:
    """Path by adaptive sieving (``"as"``) or full solves with or without warm starts."""
    if strategy == "as":
        return as_path(problem, lambdas, eps, config, **kw)
    if strategy not in ("warmstart", "cold"):
        raise ValueError(f"unknown strategy {strategy!r}")
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) >= 0) or np.any(lambdas <= 0):
        raise ValueError("lambdas must be positive and strictly decreasing")
    cfg = config or PpdnaConfig()
    cfg = PpdnaConfig(**{**cfg.__dict__, "tol": eps})
    res = PathResult(lambdas, [], [], [], strategy=strategy)
    x0 = u0 = None
    for lam in lambdas:
        P = problem.with_lambda(lam)
        t0 = time.perf_counter()
        sol, rep = ppdna_solve(P, cfg, x0=x0, u0=u0)
        res.timing.append(time.perf_counter() - t0)
        res.solutions.append(sol)
        res.sieve_stats.append([(1, problem.n, 0, float("nan"))])
        res.outer_iters.append(rep.outer_iters)
        res.inner_iters.append(rep.total_inner_iters)
        if not rep.converged:
            res.failures.append((float(lam), rep.status))
        if strategy == "warmstart":
            x0 = sol.x
    return res
