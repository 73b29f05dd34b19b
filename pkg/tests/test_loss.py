import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import bisect
from scipy.special import expit

from exclasso.loss import (loss_grad, loss_hess_diag, loss_value, moreau_env_h, prox_h,
                           prox_h_jacobian_diag)

KINDS = ["squared", "logistic"]


def labels(rng, m):
    return np.where(rng.standard_normal(m) >= 0, 1.0, -1.0)


def data(kind, rng, m):
    return rng.standard_normal(m) if kind == "squared" else labels(rng, m)


def test_squared_at_b(rng):
    b = rng.standard_normal(5)
    assert loss_value("squared", b, b) == 0
    assert np.all(loss_grad("squared", b, b) == 0)
    assert np.all(loss_hess_diag("squared", b, b) == 1)


def test_logistic_at_zero(rng):
    b = labels(rng, 7)
    y = np.zeros(7)
    assert loss_value("logistic", b, y) == pytest.approx(7 * np.log(2), rel=1e-15)
    np.testing.assert_allclose(loss_grad("logistic", b, y), -b / 2)
    np.testing.assert_allclose(loss_hess_diag("logistic", b, y), 0.25)


def test_length_mismatch():
    with pytest.raises(ValueError):
        loss_value("squared", np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        loss_value("hinge", np.ones(3), np.ones(3))


@pytest.mark.parametrize("kind", KINDS)
@given(seed=st.integers(0, 2**32 - 1))
def test_grad_and_hessian_finite_differences(kind, seed):
    rng = np.random.default_rng(seed)
    m = 6
    b = data(kind, rng, m)
    y = 2 * rng.standard_normal(m)
    g = loss_grad(kind, b, y)
    H = loss_hess_diag(kind, b, y)
    for i in range(m):
        h = 1e-6 * (1 + abs(y[i]))
        e = np.zeros(m)
        e[i] = h
        fd = (loss_value(kind, b, y + e) - loss_value(kind, b, y - e)) / (2 * h)
        assert fd == pytest.approx(g[i], rel=1e-6, abs=1e-7)
        fd2 = (loss_grad(kind, b, y + e)[i] - loss_grad(kind, b, y - e)[i]) / (2 * h)
        assert fd2 == pytest.approx(H[i], rel=1e-6, abs=1e-7)


def test_logistic_overflow_safe():
    b = np.array([1.0, -1.0, 1.0, -1.0])
    y = np.array([1e4, 1e4, -1e4, -1e4])
    with np.errstate(over="raise", invalid="raise"):
        v = loss_value("logistic", b, y)
        g = loss_grad("logistic", b, y)
        H = loss_hess_diag("logistic", b, y)
    assert v == pytest.approx(2e4)
    np.testing.assert_allclose(g, [0, 1, -1, 0], atol=1e-300)
    assert np.all(np.isfinite(H))


def bisection_prox(b, z, nu):
    out = np.empty_like(z)
    for i in range(z.size):
        f = lambda v: v - z[i] - nu * b[i] * expit(-b[i] * v)
        out[i] = bisect(f, z[i] - nu - 1, z[i] + nu + 1, xtol=1e-14, rtol=1e-15, maxiter=500)
    return out


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1e6))
def test_logistic_prox_matches_bisection(seed, nu):
    rng = np.random.default_rng(seed)
    b = labels(rng, 8)
    z = 10 * rng.standard_normal(8)
    v = prox_h("logistic", b, z, nu)
    res = v - z - nu * b * expit(-b * v)
    # the residual is resolved to the rounding level of nu * grad h
    assert np.all(np.abs(res) <= 1e-12 * (1 + nu * loss_hess_diag("logistic", b, v)) * (1 + np.abs(v)))
    np.testing.assert_allclose(v, bisection_prox(b, z, nu), atol=1e-10 * (1 + np.abs(z).max()))


def test_logistic_prox_large_nu_and_input(rng):
    # regression: a line-search trial can send z and nu far out
    b = labels(rng, 50)
    z = 4e4 * rng.standard_normal(50)
    v = prox_h("logistic", b, z, 2e7)
    assert np.all(np.isfinite(v))
    np.testing.assert_allclose(v, bisection_prox(b, z, 2e7), rtol=1e-10, atol=1e-8)


@pytest.mark.parametrize("kind", KINDS)
def test_prox_fixed_point_and_tiny_nu(kind, rng):
    b = data(kind, rng, 9)
    z = rng.standard_normal(9)
    if kind == "squared":
        np.testing.assert_allclose(prox_h(kind, b, b, 3.7), b)
    out = prox_h(kind, b, z, 1e-12)
    assert np.linalg.norm(out - z) <= 1e-9 * (1 + np.linalg.norm(z))
    with pytest.raises(ValueError):
        prox_h(kind, b, z, 0.0)


@pytest.mark.parametrize("kind", KINDS)
@given(seed=st.integers(0, 2**32 - 1), nu=st.floats(1e-3, 1e3))
def test_prox_nonexpansive(kind, seed, nu):
    rng = np.random.default_rng(seed)
    b = data(kind, rng, 10)
    z1, z2 = 5 * rng.standard_normal((2, 10))
    d = np.linalg.norm(prox_h(kind, b, z1, nu) - prox_h(kind, b, z2, nu))
    assert d <= np.linalg.norm(z1 - z2) * (1 + 1e-10)


def test_jacobian_diag_examples(rng):
    b = rng.standard_normal(4)
    np.testing.assert_allclose(prox_h_jacobian_diag("squared", b, rng.standard_normal(4), 1.0), 0.5)
    # prox at 0 when z = -nu * b / 2, where h'' = 1/4
    bl = np.array([1.0, -1.0])
    z = -4.0 * bl / 2
    np.testing.assert_allclose(prox_h("logistic", bl, z, 4.0), 0.0, atol=1e-12)
    np.testing.assert_allclose(prox_h_jacobian_diag("logistic", bl, z, 4.0), 0.5, rtol=1e-10)


@pytest.mark.parametrize("kind", KINDS)
@given(seed=st.integers(0, 2**32 - 1), nu=st.floats(1e-2, 1e2))
def test_jacobian_diag_finite_differences(kind, seed, nu):
    rng = np.random.default_rng(seed)
    b = data(kind, rng, 6)
    z = 3 * rng.standard_normal(6)
    J = prox_h_jacobian_diag(kind, b, z, nu)
    assert np.all((J > 0) & (J <= 1))
    h = 1e-4 * (1 + np.abs(z))
    P = lambda t: prox_h(kind, b, z + t * h, nu)
    fd = (P(-2) - 8 * P(-1) + 8 * P(1) - P(2)) / (12 * h)  # fourth-order stencil
    np.testing.assert_allclose(fd, J, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("kind", KINDS)
@given(seed=st.integers(0, 2**32 - 1), nu=st.floats(1e-3, 1e3))
def test_envelope_bounded(kind, seed, nu):
    rng = np.random.default_rng(seed)
    b = data(kind, rng, 7)
    z = 3 * rng.standard_normal(7)
    assert moreau_env_h(kind, b, z, nu) <= nu * loss_value(kind, b, z) * (1 + 1e-12) + 1e-12


@pytest.mark.parametrize("kind", KINDS)
def test_envelope_examples(kind, rng):
    b = data(kind, rng, 5)
    if kind == "squared":
        assert moreau_env_h(kind, b, b, 2.0) == pytest.approx(0.0, abs=1e-28)
    z = rng.standard_normal(5)
    nu = 1e-9
    assert moreau_env_h(kind, b, z, nu) == pytest.approx(nu * loss_value(kind, b, z), rel=1e-6)
