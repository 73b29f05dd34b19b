"""First-order reference solvers: ADMM and accelerated proximal gradient."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .loss import hessian_bound, loss_grad, loss_value, prox_h
from .model import Problem, Solution, SolverReport
from .ppdna import kkt_residual
from .prox import prox_exclusive

GOLDEN = (1 + 5 ** 0.5) / 2


@dataclass
class FirstOrderConfig:
    max_iter: int = 200000
    tol: float = 1e-6
    time_limit: float = 3600.0
    check_every: int = 10
    # ADMM
    rho: float = 1.0
    step_length: float = 1.618
    rho_min: float = 1e-4
    rho_max: float = 1e4
    adapt_every: int = 50
    x_update: str = "auto"  # exact | linearized | auto
    # APG
    backtrack: float = 2.0
    restart: bool = True

    def __post_init__(self):
        if not 0 < self.step_length < GOLDEN:
            raise ValueError("step length must lie in (0, (1 + sqrt 5) / 2)")
        if self.x_update not in ("auto", "exact", "linearized"):
            raise ValueError(f"unknown x_update {self.x_update!r}")


class _NormalSolver:
    """Solves ``(I + A^T A) x = r`` with a cached factorization.

    Uses the ``n x n`` system when ``n <= m`` and the Woodbury form with the
    ``m x m`` system ``I + A A^T`` otherwise.
    """

    def __init__(self, A):
        self.A = A
        m, n = A.shape
        dense = A.toarray() if sp.issparse(A) else A
        self.small_side = "n" if n <= m else "m"
        if self.small_side == "n":
            G = dense.T @ dense
        else:
            G = dense @ dense.T
        G[np.diag_indices_from(G)] += 1.0
        self.factor = sla.cho_factor(G, lower=True)

    def solve(self, r):
        if self.small_side == "n":
            return sla.cho_solve(self.factor, r)
        A = self.A
        return r - A.T @ sla.cho_solve(self.factor, A @ r)


def _finish(problem, x, Ax, report, t0):
    report.wall_time = time.perf_counter() - t0
    eta = kkt_residual(problem, x, Ax)
    if not report.residual_history or report.residual_history[-1][1] != eta:
        report.residual_history.append((report.outer_iters, eta))
    return Solution(x, eta, problem.objective(x, Ax)), report


def admm_solve(problem: Problem, config: FirstOrderConfig | None = None, x0=None):
    """ADMM on ``min h(y) - <c, x> + lam p(z)`` s.t. ``y = Ax``, ``z = x``.

    The ``x`` block is a least-squares solve with ``I + A^T A`` (independent
    of the penalty, factored once); the ``(y, z)`` block is separable into
    the loss prox and the exclusive lasso prox. With
    ``x_update="linearized"`` the ``x`` block is replaced by one gradient
    step on its quadratic model with constant ``rho (||A||^2 + 1)``.
    Multipliers move with the step length ``1.618``.
    """
    cfg = config or FirstOrderConfig()
    t0 = time.perf_counter()
    A, lam = problem.A, problem.lam
    m, n = problem.shape
    mode = cfg.x_update
    if mode == "auto":
        mode = "exact" if min(m, n) <= 5000 else "linearized"
    solver = _NormalSolver(A) if mode == "exact" else None
    lip = problem.lambda_max_AAt() + 1.0

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    Ax = A @ x
    y, z = Ax.copy(), x.copy()
    my, mz = np.zeros(m), np.zeros(n)  # multipliers of y = Ax and z = x
    rho = cfg.rho
    report = SolverReport("admm")
    report.info["x_update"] = mode
    best = (np.inf, z.copy())

    for it in range(1, cfg.max_iter + 1):
        if mode == "exact":
            rhs = A.T @ (y - my / rho) + (z - mz / rho) + problem.c / rho
            x = solver.solve(rhs)
        else:
            g = rho * (A.T @ (Ax - y + my / rho) + (x - z + mz / rho)) - problem.c
            x = x - g / (rho * lip)
        Ax = A @ x
        y_old, z_old = y, z
        y = prox_h(problem.loss, problem.b, Ax + my / rho, 1.0 / rho)
        z = prox_exclusive(x + mz / rho, lam / rho, problem.w, problem.partition)
        ry, rz = Ax - y, x - z
        my = my + cfg.step_length * rho * ry
        mz = mz + cfg.step_length * rho * rz
        report.outer_iters = it

        if it % cfg.check_every == 0 or it == cfg.max_iter:
            Az = A @ z
            eta = kkt_residual(problem, z, Az)
            report.residual_history.append((it, eta))
            if eta < best[0]:
                best = (eta, z.copy())
            if eta <= cfg.tol:
                report.status = "converged"
                break
            if time.perf_counter() - t0 > cfg.time_limit:
                report.status = "time-limit"
                break
        if it % cfg.adapt_every == 0:
            primal = np.sqrt(ry @ ry + rz @ rz)
            dy, dz = y - y_old, z - z_old
            dual = rho * np.linalg.norm(A.T @ dy + dz)
            if primal > 10 * dual and rho < cfg.rho_max:
                rho = min(2 * rho, cfg.rho_max)
            elif dual > 10 * primal and rho > cfg.rho_min:
                rho = max(rho / 2, cfg.rho_min)

    report.info["rho"] = rho
    x_out = z if report.status == "converged" else best[1]
    return _finish(problem, x_out, A @ x_out, report, t0)


def apg_solve(problem: Problem, config: FirstOrderConfig | None = None, x0=None):
    """FISTA with backtracking and function-value restart.

    When an accelerated step would raise the objective, momentum is reset
    and a plain proximal gradient step is taken instead, so accepted
    objective values never increase.
    """
    cfg = config or FirstOrderConfig()
    t0 = time.perf_counter()
    A, lam, w, part = problem.A, problem.lam, problem.w, problem.partition
    kind, b, c = problem.loss, problem.b, problem.c

    def smooth(Ax_, x_):
        return loss_value(kind, b, Ax_) - c @ x_

    L = max(problem.lambda_max_AAt() * hessian_bound(kind), 1e-12)
    x = np.zeros(problem.n) if x0 is None else np.array(x0, dtype=float)
    Ax = A @ x
    F = smooth(Ax, x) + lam * problem.regularizer(x)
    yv, Ay = x.copy(), Ax.copy()
    t = 1.0
    report = SolverReport("apg")
    restarts = 0

    def prox_step(v, Av):
        nonlocal L
        gv = A.T @ loss_grad(kind, b, Av) - c
        fv = smooth(Av, v)
        while True:
            xn = prox_exclusive(v - gv / L, lam / L, w, part)
            Axn = A @ xn
            dx = xn - v
            if smooth(Axn, xn) <= fv + gv @ dx + 0.5 * L * (dx @ dx) + 1e-12 * abs(fv):
                return xn, Axn
            L *= cfg.backtrack

    for it in range(1, cfg.max_iter + 1):
        xn, Axn = prox_step(yv, Ay)
        Fn = smooth(Axn, xn) + lam * problem.regularizer(xn)
        if cfg.restart and Fn > F:
            restarts += 1
            t = 1.0
            xn, Axn = prox_step(x, Ax)
            Fn = smooth(Axn, xn) + lam * problem.regularizer(xn)
        tn = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        beta = (t - 1) / tn
        yv = xn + beta * (xn - x)
        Ay = Axn + beta * (Axn - Ax)
        x, Ax, F, t = xn, Axn, Fn, tn
        report.outer_iters = it
        if it % cfg.check_every == 0 or it == cfg.max_iter:
            eta = kkt_residual(problem, x, Ax)
            report.residual_history.append((it, eta))
            if eta <= cfg.tol:
                report.status = "converged"
                break
            if time.perf_counter() - t0 > cfg.time_limit:
                report.status = "time-limit"
                break

    report.info.update(restarts=restarts, lipschitz=L)
    return _finish(problem, x, Ax, report, t0)
