import itertools

import numpy as np
import pytest

from exclasso.model import GroupPartition, Problem


def enum_prox_nonneg(a, w, rho):
    """Brute-force minimizer of 0.5||x - a||^2 + rho (w.x)^2 over x >= 0.

    Tries every support S, solves (I + 2 rho w_S w_S^T) x_S = a_S and keeps
    the candidate meeting the KKT conditions; ties are settled by the
    objective value.
    """
    a = np.asarray(a, float)
    w = np.asarray(w, float)
    n = a.size
    best, best_val = None, np.inf
    for k in range(n + 1):
        for S in itertools.combinations(range(n), k):
            S = list(S)
            x = np.zeros(n)
            if S:
                wS = w[S]
                M = np.eye(len(S)) + 2 * rho * np.outer(wS, wS)
                x[S] = np.linalg.solve(M, a[S])
                if np.any(x[S] < -1e-13):
                    continue
            g = x - a + 2 * rho * w * (w @ x)
            if np.any(g < -1e-10 * (1 + np.abs(a))):
                continue
            val = 0.5 * np.sum((x - a) ** 2) + rho * (w @ x) ** 2
            if val < best_val:
                best, best_val = x, val
    return best


def enum_prox(a, w, rho):
    a = np.asarray(a, float)
    return np.sign(a) * enum_prox_nonneg(np.abs(a), w, rho)


def random_partition(rng, n, l):
    labels = np.concatenate([np.arange(l), rng.integers(0, l, size=n - l)])
    rng.shuffle(labels)
    return GroupPartition.from_labels(labels)


def random_problem(rng, m, n, l=None, loss="squared", lam=None, sparse_weights=False):
    l = l or max(1, n // 5)
    A = rng.standard_normal((m, n))
    if loss == "squared":
        b = A[:, : min(n, 3)] @ rng.uniform(1, 3, size=min(n, 3)) + 0.1 * rng.standard_normal(m)
    else:
        b = np.where(rng.standard_normal(m) >= 0, 1.0, -1.0)
    w = rng.uniform(0.5, 2.0, size=n) if sparse_weights else None
    lam = rng.uniform(0.05, 1.0) if lam is None else lam
    return Problem(A, b, random_partition(rng, n, l), lam=lam, loss=loss, w=w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_log(request):
    log = request.config.__dict__.setdefault("_acceptance_log", [])
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = getattr(config, "_acceptance_log", None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(log):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
