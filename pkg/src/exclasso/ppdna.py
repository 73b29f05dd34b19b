"""Preconditioned proximal point method with a dual semismooth Newton inner solver."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

import scipy.linalg as sla
import scipy.sparse as sp

from .loss import loss_grad, loss_hess_diag
from .model import Problem, Solution, SolverReport
from .prox import prox_exclusive
from .ssn import DualSubproblem, SSNParams, ssn_solve


def proximal_residual(problem: Problem, x, Ax=None):
    """``R(x) = x - Prox_{lam p}(x - grad Phi(x))`` and the smooth gradient.

    Returns ``(residual_vector, grad)``.
    """
    grad = problem.smooth_grad(x, Ax)
    r = x - prox_exclusive(x - grad, problem.lam, problem.w, problem.partition)
    return r, grad


def kkt_residual(problem: Problem, x, Ax=None) -> float:
    """Relative KKT residual ``||R(x)|| / (1 + ||x|| + ||grad Phi(x)||)``."""
    x = np.asarray(x, dtype=float)
    r, grad = proximal_residual(problem, x, Ax)
    return float(np.linalg.norm(r) / (1.0 + np.linalg.norm(x) + np.linalg.norm(grad)))


def _face_newton(problem, x, S, best, max_steps):
    """Newton steps on the face of support ``S``; drops coordinates that hit zero."""
    lam = problem.lam
    A_full = problem.columns(S)
    A_full = A_full.toarray() if sp.issparse(A_full) else A_full
    keep = np.ones(S.size, dtype=bool)
    for _ in range(max_steps):
        idx = S[keep]
        if idx.size == 0:
            break
        A_S = A_full[:, keep]
        _, g = np.unique(problem.partition.group_of[idx], return_inverse=True)
        xs = x[idx]
        v = problem.w[idx] * np.sign(xs)
        y = A_S @ xs
        proj = np.bincount(g, weights=v * xs)
        grad = A_S.T @ loss_grad(problem.loss, problem.b, y) - problem.c[idx] + 2 * lam * v * proj[g]
        D = loss_hess_diag(problem.loss, problem.b, y)
        H = A_S.T @ (A_S * D[:, None]) + 2 * lam * np.where(np.equal.outer(g, g), np.outer(v, v), 0.0)
        try:
            d = sla.solve(H, -grad, assume_a="sym")
        except (sla.LinAlgError, ValueError):
            break
        cross = xs * d < 0
        ratio = np.full(xs.size, np.inf)
        ratio[cross] = -xs[cross] / d[cross]
        step = min(1.0, float(ratio.min()))
        x = x.copy()
        x[idx] = xs + step * d
        if step < 1.0:
            hit = ratio <= step
            x[idx[hit]] = 0.0
            keep[np.flatnonzero(keep)[hit]] = False
        eta = kkt_residual(problem, x)
        if eta < best[0]:
            best = (eta, x)
        elif step == 1.0:
            break
    return x, best


def polish_solution(problem: Problem, x, passes: int = 5, max_steps: int = 8,
                    max_support: int = 5000):
    """Refine ``x`` by Newton steps on the smooth face fixed by its support and signs.

    On that face the regularizer is ``sum_j (v_j . x_j)^2`` with ``v = w * sign(x)``.
    A step that would flip a sign is cut at the first zero crossing and the
    coordinate leaves the support; between passes, zero coordinates whose
    gradient violates optimality join it with a tiny value of the descent
    sign. The iterate with the smallest KKT residual is returned as ``(x, eta)``.
    """
    x = np.array(x, dtype=float)
    best = (kkt_residual(problem, x), x)
    part = problem.partition
    for _ in range(passes):
        S = np.flatnonzero(x)
        if S.size == 0 or S.size > max_support:
            break
        x, best = _face_newton(problem, x, S, best, max_steps)
        grad = problem.smooth_grad(x)
        gnorm = part.group_sums(np.abs(problem.w * x))
        slack = np.abs(grad) - 2 * problem.lam * gnorm[part.group_of] * problem.w
        viol = np.flatnonzero((x == 0) & (slack > 1e-14 * (1 + np.abs(grad))))
        if viol.size == 0:
            break
        x = x.copy()
        x[viol] = -np.sign(grad[viol]) * 1e-12
    return best[1], best[0]


def default_tau(problem: Problem) -> float:
    lmax = problem.lambda_max_AAt()
    return 1.0 / lmax if lmax > 0 else 1.0


@dataclass
class PpdnaConfig:
    """Parameters of the proximal point loop.

    ``eps_k = eps_rate**k`` and ``delta_k = min(delta_cap, delta_rate**k)``
    are the summable inner tolerance sequences. ``tau=None`` selects
    ``1 / lambda_max(A A^T)``; ``sigma0=None`` selects ``min(1, 0.01 / lam)``.
    """

    sigma0: float | None = None
    sigma_growth: float = 3.0
    sigma_max: float = 1e6
    tau: float | None = None
    tol: float = 1e-6
    eps_rate: float = 0.5
    delta_rate: float = 0.5
    delta_cap: float = 0.5
    max_outer: int = 200
    max_inner: int = 200
    max_total_inner: int = 10000
    time_limit: float = 3600.0
    strategy: str = "auto"
    polish: bool = False
    patience: int = 10
    ssn: SSNParams = field(default_factory=SSNParams)

    def __post_init__(self):
        if self.sigma0 is not None and not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not (self.sigma_growth >= 1 and self.sigma_max > 0):
            raise ValueError("need sigma_growth >= 1 and sigma_max > 0")
        if not (0 < self.eps_rate < 1 and 0 < self.delta_rate < 1 and 0 <= self.delta_cap < 1):
            raise ValueError("tolerance rates must lie in (0, 1)")

    def initial_sigma(self, lam: float) -> float:
        """``sigma0``, or ``min(1, 0.01 / lam)`` when unset.

        The subproblem gets harder as ``sigma * lam`` grows, so heavily
        regularized problems start with a stronger proximal term.
        """
        if self.sigma0 is not None:
            return self.sigma0
        return min(1.0, 0.01 / lam, self.sigma_max)

    def eps(self, k: int) -> float:
        return self.eps_rate ** k

    def delta(self, k: int) -> float:
        return min(self.delta_cap, self.delta_rate ** k)


def ppdna_solve(problem: Problem, config: PpdnaConfig | None = None, x0=None, u0=None):
    """Solve the exclusive lasso problem; returns ``(Solution, SolverReport)``.

    Each outer step approximately maximizes the dual of the proximal
    subproblem with :func:`ssn_solve`, stopping the inner loop once the
    duality gap ``f_k(x+) - psi_k(u)`` is below both
    ``eps_k^2 / (2 sigma)`` and ``delta_k^2 ||x+ - x||_M^2 / (2 sigma)``,
    or once ``x+`` already meets the outer tolerance.
    """
    cfg = config or PpdnaConfig()
    t0 = time.perf_counter()
    A = problem.A
    tau = cfg.tau if cfg.tau is not None else default_tau(problem)
    x = np.zeros(problem.n) if x0 is None else np.array(x0, dtype=float)
    Ax = A @ x
    # stationarity in v of the subproblem Lagrangian gives u = grad h(Ax) once x settles
    u = loss_grad(problem.loss, problem.b, Ax) if u0 is None else np.array(u0, dtype=float)
    eta = kkt_residual(problem, x, Ax)
    report = SolverReport("ppdna", residual_history=[(0, eta)])
    report.info.update(tau=tau, gaps=[], sigmas=[])
    sigma = cfg.initial_sigma(problem.lam)
    best = (eta, x)
    since_best = 0

    if eta <= cfg.tol:
        report.status = "converged"
    else:
        for k in range(cfg.max_outer):
            sub = DualSubproblem(problem, x, sigma, tau, Ax=Ax)
            eps_k, delta_k = cfg.eps(k), cfg.delta(k)
            gap_seen = []

            def stop(pt, sub=sub, eps_k=eps_k, delta_k=delta_k, gap_seen=gap_seen):
                xn, Axn = pt.xp, pt.Axp
                gap = sub.gap(pt)
                gap_seen.append(gap)
                dx = xn - sub.x
                dAx = Axn - sub.Ax
                mnorm2 = dx @ dx + tau * (dAx @ dAx)
                bound = min(eps_k ** 2, delta_k ** 2 * mnorm2) / (2 * sub.sigma)
                if gap <= bound:
                    return True
                return kkt_residual(problem, xn, Axn) <= cfg.tol

            budget = min(cfg.max_inner, cfg.max_total_inner - report.total_inner_iters)
            res = ssn_solve(sub, u, inner_tol=1e-12 * (1.0 + np.linalg.norm(sub.Ax)),
                            max_iter=max(budget, 0), params=cfg.ssn, stop=stop,
                            strategy=cfg.strategy)
            report.total_inner_iters += res.iterations
            report.outer_iters = k + 1
            u = res.u
            x, Ax = res.point.xp, res.point.Axp
            eta = kkt_residual(problem, x, Ax)
            report.residual_history.append((k + 1, eta))
            if eta < best[0]:
                best = (eta, x)
                since_best = 0
            elif sigma >= cfg.sigma_max:
                since_best += 1
            report.info["sigmas"].append(sigma)
            report.info["gaps"].append(gap_seen[-1] if gap_seen else float("nan"))
            if eta <= cfg.tol:
                report.status = "converged"
                break
            if time.perf_counter() - t0 > cfg.time_limit:
                report.status = "time-limit"
                break
            if report.total_inner_iters >= cfg.max_total_inner:
                break
            if since_best >= cfg.patience:
                # at full sigma and below the attainable accuracy the iterates only wander
                report.status = "stalled"
                break
            sigma = min(cfg.sigma_growth * sigma, cfg.sigma_max)

    if report.status != "converged" and best[0] < eta:
        x, eta = best[1], best[0]
        Ax = A @ x
    if cfg.polish:
        x, eta_p = polish_solution(problem, x)
        report.info["polished"] = eta_p < eta
        if eta_p <= cfg.tol:
            report.status = "converged"
        eta = eta_p
        Ax = A @ x
    report.wall_time = time.perf_counter() - t0
    report.info["u"] = u
    sol = Solution(x, eta, problem.objective(x, Ax))
    return sol, report
