import numpy as np
import pytest

from asamtc.active_subspace import ActiveSubspace, discover
from asamtc.distributions import Marginal, RandomVector
from asamtc.models import piston
from asamtc.nipc import (ActiveBasis, PceSurrogate, TensorBasis, TotalDegreeBasis, compute_coefficients, mean,
                         surrogate_eval, variance)
from asamtc.orthopoly import HERMITE_FAMILY, gauss_rule
from asamtc.quadrature import solve_rule
from asamtc.whitening import make_basis


@pytest.fixture(scope="module")
def ridge_setup():
    rv = RandomVector([Marginal.normal(1, 2), Marginal.uniform(-1, 3), Marginal.normal(0, 1)])
    W = np.linalg.qr(np.random.default_rng(0).normal(size=(3, 3)))[0]
    asub = ActiveSubspace(np.ones(3), W, 1, rv)
    basis = make_basis(asub, 6)
    rule = solve_rule(basis, asub, k=7)
    return asub, ActiveBasis(basis.truncate(3), asub), rule


def test_basis_function_projects_to_unit_vector(ridge_setup):
    asub, pb, rule = ridge_setup
    phi = pb.eval(rule.nodes)
    alpha = compute_coefficients(phi[:, 2], phi, rule.weights)
    np.testing.assert_allclose(alpha, np.eye(len(pb))[2], atol=1e-8)


def test_constant(ridge_setup):
    _, pb, rule = ridge_setup
    alpha = compute_coefficients(np.full(len(rule), 7.0), pb.eval(rule.nodes), rule.weights)
    assert alpha[0] == pytest.approx(7.0, abs=1e-10)
    assert np.abs(alpha[1:]).max() <= 1e-10


def test_nan_reports_node():
    with pytest.raises(FloatingPointError, match="node 1"):
        compute_coefficients([1.0, np.nan], np.ones((2, 1)), [0.5, 0.5])


@pytest.mark.parametrize("alpha,m,v", [([3, 0, 0], 3, 0), ([0, 1, 1], 0, 2)])
def test_moments(alpha, m, v):
    s = PceSurrogate(TotalDegreeBasis(RandomVector([Marginal.normal(0, 1)]), 2), alpha)
    assert mean(s) == m and variance(s) == v


def test_coefficient_length_checked():
    with pytest.raises(ValueError, match="coefficients for a basis"):
        PceSurrogate(TotalDegreeBasis(RandomVector([Marginal.normal(0, 1)]), 2), [1.0, 2.0])


def test_surrogate_eval(ridge_setup):
    asub, pb, rule = ridge_setup
    u = asub.rv.sample(100, 3)
    assert np.all(surrogate_eval(PceSurrogate(pb, np.zeros(len(pb))), u) == 0)
    phi = pb.eval(rule.nodes)
    s = PceSurrogate(pb, compute_coefficients(phi[:, 1], phi, rule.weights))
    np.testing.assert_allclose(s(u), pb.eval(u)[:, 1], atol=1e-6)


def test_idempotence_parseval_linearity(ridge_setup):
    asub, pb, rule = ridge_setup
    phi = pb.eval(rule.nodes)
    ut = asub.project(rule.nodes)[:, 0]
    f = np.exp(0.3 * ut)
    g = np.cos(ut)
    af = compute_coefficients(f, phi, rule.weights)
    ag = compute_coefficients(g, phi, rule.weights)
    s = PceSurrogate(pb, af)
    np.testing.assert_allclose(compute_coefficients(s(rule.nodes), phi, rule.weights), af, atol=1e-8)
    centered = rule.weights @ (f - rule.weights @ f) ** 2
    assert s.variance <= centered + 1e-8
    np.testing.assert_allclose(compute_coefficients(2.5 * f - 3 * g, phi, rule.weights), 2.5 * af - 3 * ag,
                               atol=1e-10)


def test_tensor_basis_layout_and_orthonormality():
    rv = RandomVector([Marginal.normal(0, 1)] * 3)
    asub = ActiveSubspace(np.ones(2), np.eye(2), 1, rv.subset([0, 1]), (0, 1))
    core = ActiveBasis(make_basis(asub, 2), asub)
    tb = TensorBasis(core, rv, [2], 2)
    assert len(tb) == 9
    assert tb.labels()[:4] == ["a(0)x(0)", "a(0)x(1)", "a(0)x(2)", "a(1)x(0)"]
    # quadrature over (u1, u3) with u2 integrated out exactly
    x, w = gauss_rule(HERMITE_FAMILY, 4)
    pts = np.array([[a, 0.3, c] for a in x for c in x])
    wts = np.outer(w, w).ravel()
    P = tb.eval(pts)
    np.testing.assert_allclose((P * wts[:, None]).T @ P, np.eye(9), atol=1e-12)


def test_piston_coefficients():
    model = piston()
    asub = discover(model.grad, model.rv, 100, seed=0, m=1)
    basis = make_basis(asub, 4)
    rule = solve_rule(basis, asub, k=5)
    pb = ActiveBasis(basis.truncate(2), asub)
    alpha = compute_coefficients(model(rule.nodes), pb.eval(rule.nodes), rule.weights)
    mc = model(model.rv.sample(100_000, 20240101))
    assert alpha[0] == pytest.approx(mc.mean(), rel=1e-2)
    assert np.sum(alpha[1:] ** 2) == pytest.approx(mc.var(), rel=0.1)


@pytest.mark.xfail(strict=True, reason="a one-dimensional ridge leaves ~12% of the piston's output std "
                                       "unexplained; see the limitations section of the README")
def test_piston_surrogate_rms():
    model = piston()
    asub = discover(model.grad, model.rv, 100, seed=0, m=1)
    basis = make_basis(asub, 4)
    rule = solve_rule(basis, asub, k=5)
    pb = ActiveBasis(basis.truncate(2), asub)
    s = PceSurrogate(pb, compute_coefficients(model(rule.nodes), pb.eval(rule.nodes), rule.weights))
    u = model.rv.sample(1000, 99)
    y = model(u)
    assert np.sqrt(np.mean((s(u) - y) ** 2)) <= 0.02 * y.std()
