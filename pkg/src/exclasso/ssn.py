"""Semismooth Newton method for the dual of the proximal point subproblem.

For an anchor ``x`` and parameters ``sigma, tau`` the subproblem

    min_v  h(Av) - <c, v> + lam p(v) + ||v - x||_M^2 / (2 sigma),
    M = I + tau A^T A,

has the smooth concave dual ``psi(u)``, whose gradient is

    -Prox_{sigma h / tau}(Ax + sigma u / tau) + A Prox_{sigma lam p}(x + sigma c - sigma A^T u).

Newton directions solve ``(sigma/tau) H d + sigma A M A^T d = grad`` where
``H`` is the (diagonal) Jacobian of the loss prox and ``M`` the HS-Jacobian
of the regularizer prox. Only the columns of ``A`` in the active set of
``M`` enter the system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .loss import loss_value, moreau_env_h, prox_h, prox_h_jacobian_diag
from .model import Problem
from .prox import JacobianElement, hs_jacobian_exclusive, moreau_env_exclusive, prox_exclusive

log = logging.getLogger(__name__)


@dataclass
class SSNParams:
    mu: float = 1e-4
    tau_bar: float = 0.5
    gamma_bar: float = 1e-3
    delta: float = 0.5
    max_backtracks: int = 40
    m_direct: int = 3000
    k_direct: int = 3000
    smw_ratio: float = 0.5
    cg_maxiter: int = 500


@dataclass
class DualPoint:
    """Everything computed while evaluating ``psi`` at ``u``."""

    u: np.ndarray
    value: float
    grad: np.ndarray
    z: np.ndarray  # Ax + (sigma/tau) u
    v: np.ndarray  # loss prox at z
    y: np.ndarray  # x + sigma c - sigma A^T u
    xp: np.ndarray  # regularizer prox at y
    Axp: np.ndarray | None = None


class DualSubproblem:
    """The dual objective ``psi_k`` for fixed anchor, ``sigma`` and ``tau``."""

    def __init__(self, problem: Problem, x: np.ndarray, sigma: float, tau: float, Ax=None):
        if not (sigma > 0 and tau > 0):
            raise ValueError("sigma and tau must be positive")
        self.problem = problem
        self.x = np.asarray(x, dtype=float)
        self.sigma = float(sigma)
        self.tau = float(tau)
        self.Ax = problem.A @ self.x if Ax is None else Ax
        self.xc = self.x + self.sigma * problem.c
        self._const = (self.tau * (self.Ax @ self.Ax) + self.x @ self.x) / (2 * self.sigma)

    @property
    def nu_h(self) -> float:
        return self.sigma / self.tau

    @property
    def nu_p(self) -> float:
        return self.sigma * self.problem.lam

    def evaluate(self, u: np.ndarray) -> DualPoint:
        p, s, t = self.problem, self.sigma, self.tau
        u = np.asarray(u, dtype=float)
        z = self.Ax + (s / t) * u
        v = prox_h(p.loss, p.b, z, s / t)
        y = self.xc - s * (p.A.T @ u)
        xp = prox_exclusive(y, s * p.lam, p.w, p.partition)
        Axp = p.A @ xp
        grad = Axp - v
        # Lagrangian form of the envelope expression: no terms of size sigma ||A^T u||^2,
        # which cancel catastrophically once sigma is large
        dx = xp - self.x
        dv = v - self.Ax
        value = (
            loss_value(p.loss, p.b, v)
            - p.c @ xp
            + p.lam * p.regularizer(xp)
            + (dx @ dx) / (2 * s)
            + t * (dv @ dv) / (2 * s)
            + u @ grad
        )
        return DualPoint(u, float(value), grad, z, v, y, xp, Axp)

    def envelope_value(self, u: np.ndarray) -> float:
        """``psi(u)`` assembled from the two Moreau envelopes.

        Equal to ``evaluate(u).value`` in exact arithmetic but loses accuracy
        for large ``sigma``; kept as a reference.
        """
        p, s, t = self.problem, self.sigma, self.tau
        z = self.Ax + (s / t) * u
        v = prox_h(p.loss, p.b, z, s / t)
        y = self.xc - s * (p.A.T @ u)
        xp = prox_exclusive(y, s * p.lam, p.w, p.partition)
        env_h = moreau_env_h(p.loss, p.b, z, s / t, v)
        env_p = moreau_env_exclusive(y, s * p.lam, p.w, p.partition, xp)
        return float(
            -(t / (2 * s)) * (z @ z)
            + (t / s) * env_h
            - (y @ y) / (2 * s)
            + env_p / s
            + self._const
        )

    def gap(self, pt: DualPoint) -> float:
        """``f_k(xp) - psi(u)`` without forming either value."""
        p, s, t = self.problem, self.sigma, self.tau
        dA = pt.Axp - self.Ax
        dv = pt.v - self.Ax
        return float(
            loss_value(p.loss, p.b, pt.Axp) - loss_value(p.loss, p.b, pt.v)
            - pt.u @ pt.grad
            + t * ((dA @ dA) - (dv @ dv)) / (2 * s)
        )

    def primal_value(self, xv: np.ndarray, Axv=None) -> float:
        """``f_k`` at ``xv``: objective plus ``||xv - x||_M^2 / (2 sigma)``."""
        return fk_value(self.problem, self.sigma, self.tau, self.x, xv, Ax_anchor=self.Ax, Ax=Axv)


def fk_value(problem, sigma, tau, x_anchor, x, Ax_anchor=None, Ax=None) -> float:
    A = problem.A
    if Ax is None:
        Ax = A @ x
    if Ax_anchor is None:
        Ax_anchor = A @ x_anchor
    dx = x - x_anchor
    dAx = Ax - Ax_anchor
    prox_term = (dx @ dx + tau * (dAx @ dAx)) / (2 * sigma)
    obj = loss_value(problem.loss, problem.b, Ax) - problem.c @ x + problem.lam * problem.regularizer(x)
    return float(obj + prox_term)


def psi_value(sub: DualSubproblem, u) -> float:
    return sub.evaluate(u).value


def psi_grad(sub: DualSubproblem, u) -> np.ndarray:
    return sub.evaluate(u).grad


@dataclass
class NewtonSystem:
    """``(sigma/tau) Diag(H) d + sigma A M A^T d = rhs`` stored implicitly.

    Negating the left-hand side gives the generalized Hessian of ``psi``.
    """

    problem: Problem
    sigma: float
    tau: float
    H_diag: np.ndarray
    jac: JacobianElement
    rhs: np.ndarray
    _blocks: dict = field(default_factory=dict, repr=False)

    @property
    def active(self) -> np.ndarray:
        return self.jac.active

    def matvec(self, d: np.ndarray) -> np.ndarray:
        """Apply the (positive definite) system operator."""
        A = self.problem.A
        return (self.sigma / self.tau) * self.H_diag * d + self.sigma * (A @ self.jac.matvec(A.T @ d))

    def toarray(self) -> np.ndarray:
        A = self.problem.A
        A = A.toarray() if sp.issparse(A) else A
        return (self.sigma / self.tau) * np.diag(self.H_diag) + self.sigma * A @ self.jac.toarray() @ A.T

    def scaled_blocks(self):
        """Data of the scaled system ``(I + B Mhat B^T) dhat = rhat``.

        ``B = sqrt(tau) Diag(H)^{-1/2} A_K``. ``Mhat`` is block diagonal over
        the active groups, ``Mhat = I - S Diag(coef) S^T`` with ``S`` holding
        the signed weights ``v_j`` of group ``j`` in column ``j``.
        """
        if self._blocks:
            return self._blocks
        K = self.active
        jac = self.jac
        sqrt_h = np.sqrt(self.H_diag)
        AK = self.problem.columns(K)
        scale = np.sqrt(self.tau) / sqrt_h
        if sp.issparse(AK):
            B = sp.diags(scale) @ AK
            B = B.toarray() if K.size <= self.problem.m else B.tocsr()
        else:
            B = AK * scale[:, None]
        gids, inv = np.unique(self.problem.partition.group_of[K], return_inverse=True)
        vK = jac.wt[K]
        S = sp.csr_matrix((vK, (np.arange(K.size), inv)), shape=(K.size, gids.size))
        coef = jac.coef[gids]
        vnorm2 = np.bincount(inv, weights=vK * vK, minlength=gids.size)
        self._blocks = dict(B=B, S=S, coef=coef, vnorm2=vnorm2, sqrt_h=sqrt_h)
        return self._blocks


def assemble_jacobian(sub: DualSubproblem, u=None, point: DualPoint | None = None) -> NewtonSystem:
    """Newton system at ``u``; the right-hand side is ``grad psi(u)``."""
    if point is None:
        point = sub.evaluate(u)
    p = sub.problem
    H = prox_h_jacobian_diag(p.loss, p.b, point.z, sub.nu_h, point.v)
    jac = hs_jacobian_exclusive(point.y, sub.nu_p, p.w, p.partition)
    return NewtonSystem(p, sub.sigma, sub.tau, H, jac, point.grad)


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def choose_strategy(m: int, k: int, params: SSNParams) -> str:
    if k == 0:
        return "diag"
    if k <= params.smw_ratio * m and k <= params.k_direct:
        return "smw"
    if m <= params.m_direct:
        return "cholesky"
    return "cg"


def solve_newton_system(sys: NewtonSystem, strategy: str = "auto", tol: float | None = None,
                        params: SSNParams | None = None):
    """Solve the Newton system; returns ``(d, stats)``.

    ``tol`` bounds ``||system(d) - rhs||``; it defaults to
    ``min(gamma_bar, ||rhs||^(1 + tau_bar))`` and only matters for CG.
    """
    params = params or SSNParams()
    g = sys.rhs
    m = g.size
    K = sys.active
    st, tt = sys.sigma, sys.tau
    if tol is None:
        gn = float(np.linalg.norm(g))
        tol = min(params.gamma_bar, gn ** (1 + params.tau_bar))
    if strategy == "auto":
        strategy = choose_strategy(m, K.size, params)
    stats = {"strategy": strategy, "cg_iters": 0, "fallback": False, "active": int(K.size)}
    if K.size == 0:
        return (tt / st) * g / sys.H_diag, stats

    blk = sys.scaled_blocks()
    B, S, coef, sqrt_h = blk["B"], blk["S"], blk["coef"], blk["sqrt_h"]
    rhat = (tt / st) * g / sqrt_h

    if strategy in ("cholesky", "diag"):
        Z = _dense(B @ S)
        BBt = _dense(B @ B.T)
        G = BBt - (Z * coef) @ Z.T
        G[np.diag_indices_from(G)] += 1.0
        dhat = sla.cho_solve(sla.cho_factor(G, lower=True), rhat)
    elif strategy == "smw":
        # Mhat^{-1} = I + S Diag(e) S^T with e_j = 1 / (1/c_j - ||v_j||^2) = 2 sigma lam;
        # the closed form avoids the cancellation in the difference
        e = np.full(coef.size, 2.0 * sys.sigma * sys.problem.lam)
        inner = _dense(B.T @ B) + _dense(S @ sp.diags(e) @ S.T)
        inner[np.diag_indices_from(inner)] += 1.0
        sol = sla.cho_solve(sla.cho_factor(inner, lower=True), B.T @ rhat)
        dhat = rhat - B @ sol
    elif strategy == "cg":
        def op(v):
            y = B.T @ v
            y = y - S @ (coef * (S.T @ y))
            return v + B @ y

        Z = B @ S
        if sp.issparse(Z):
            Z = Z.toarray()
        Bsq = B.multiply(B).sum(axis=1).A1 if sp.issparse(B) else np.einsum("ij,ij->i", B, B)
        pdiag = 1.0 + Bsq - (Z * Z) @ coef
        count = [0]

        def cb(_):
            count[0] += 1

        # residual of the scaled system maps back with factor (sigma/tau) sqrt(h)
        atol = tol * tt / st / float(sqrt_h.max())
        Aop = LinearOperator((m, m), matvec=op, dtype=float)
        Pop = LinearOperator((m, m), matvec=lambda v: v / pdiag, dtype=float)
        dhat, info = cg(Aop, rhat, rtol=0.0, atol=atol, maxiter=params.cg_maxiter, M=Pop, callback=cb)
        stats["cg_iters"] = count[0]
        if info != 0:
            log.warning("CG hit %d iterations without reaching tolerance; using gradient direction", count[0])
            stats["fallback"] = True
            return g.copy(), stats
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return dhat / sqrt_h, stats


@dataclass
class SSNResult:
    u: np.ndarray
    point: DualPoint
    iterations: int
    status: str
    history: list


def ssn_solve(sub: DualSubproblem, u0, inner_tol: float = 1e-10, max_iter: int = 50,
              params: SSNParams | None = None, stop=None, strategy: str = "auto") -> SSNResult:
    """Maximize ``psi`` by semismooth Newton with Armijo backtracking.

    ``stop(point)`` may end the iteration early (it is checked at every
    iterate, including ``u0``). Status is ``"converged"`` when either the
    gradient norm reaches ``inner_tol`` or ``stop`` fires, ``"max-iter"``
    when the iteration budget runs out and ``"stalled"`` when the line
    search cannot make progress.
    """
    params = params or SSNParams()
    pt = sub.evaluate(np.asarray(u0, dtype=float))
    history = [(pt.value, float(np.linalg.norm(pt.grad)))]
    status = "max-iter"
    it = 0
    while True:
        gnorm = float(np.linalg.norm(pt.grad))
        if gnorm <= inner_tol or (stop is not None and stop(pt)):
            status = "converged"
            break
        if it >= max_iter:
            break
        sys = assemble_jacobian(sub, point=pt)
        d, _ = solve_newton_system(sys, strategy, params=params)
        slope = float(pt.grad @ d)
        if not slope > 0:
            d = pt.grad
            slope = gnorm * gnorm
        # roundoff allowance: psi differences below this are noise
        slack = 1e-15 * (abs(pt.value) + 1.0)
        step = 1.0
        new = None
        for _ in range(params.max_backtracks):
            trial = sub.evaluate(pt.u + step * d)
            if trial.value >= pt.value + params.mu * step * slope - slack:
                new = trial
                break
            step *= params.delta
        it += 1
        if new is None:
            status = "stalled"
            break
        pt = new
        history.append((pt.value, float(np.linalg.norm(pt.grad))))
    return SSNResult(pt.u, pt, it, status, history)
