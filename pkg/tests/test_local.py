import numpy as np
import pytest
from hypothesis import given, strategies as st

import fdsense as fs
from fdsense.errors import ContractError
from oracles import gaussian_study, random_instance

P = fs.PrecomputedScores


def _unit(v):
    return v / np.linalg.norm(v)


def _fd_at(inst, lam):
    return fs.estimate_fd(inst.ref_prior, P(inst.prior.score_many(inst.samples.draws, lam=lam))).value


def test_zero_at_reference():
    samples, prior, ref_prior, _ = gaussian_study(0)
    jac = fs.ScoreJacobianField.from_expfam(prior)
    for v in ([1.0, 0.0], [0.0, 1.0], _unit(np.array([1.0, -2.0]))):
        assert fs.directional_derivative(samples, ref_prior, ref_prior, jac, v) == 0.0


@given(st.integers(0, 2 ** 32 - 1))
def test_matches_quadratic_form_gradient(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, m=80)
    q = fs.build_prior_only(inst.samples, inst.prior, inst.ref_prior)
    jac = fs.ScoreJacobianField.from_expfam(inst.prior)
    lam = inst.prior.lambda_pi + rng.normal(size=q.dim)
    v = _unit(rng.normal(size=q.dim))
    cand = P(inst.prior.score_many(inst.samples.draws, lam=lam))
    d = fs.directional_derivative(inst.samples, inst.ref_prior, cand, jac, v)
    g = v @ q.gradient(lam)
    assert abs(d - g) <= 1e-10 * (1 + abs(g))


def test_matches_central_differences(rng):
    inst = random_instance(rng, d_theta=4, with_invgamma=True, m=150)
    jac = fs.ScoreJacobianField.from_expfam(inst.prior)
    for _ in range(10):
        lam = inst.prior.lambda_pi + 0.5 * rng.normal(size=inst.prior.d_T)
        v = _unit(rng.normal(size=lam.size))
        h = 1e-5
        fd = (_fd_at(inst, lam + h * v) - _fd_at(inst, lam - h * v)) / (2 * h)
        cand = P(inst.prior.score_many(inst.samples.draws, lam=lam))
        d = fs.directional_derivative(inst.samples, inst.ref_prior, cand, jac, v)
        assert d == pytest.approx(fd, rel=1e-4, abs=1e-9)


@given(st.integers(0, 2 ** 32 - 1))
def test_antisymmetric_and_linear(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, m=50)
    jac = fs.ScoreJacobianField.from_expfam(inst.prior)
    lam = inst.prior.lambda_pi + rng.normal(size=inst.prior.d_T)
    cand = P(inst.prior.score_many(inst.samples.draws, lam=lam))
    deriv = lambda v: fs.directional_derivative(inst.samples, inst.ref_prior, cand, jac, v)
    v1, v2 = _unit(rng.normal(size=lam.size)), _unit(rng.normal(size=lam.size))
    d1, d2 = deriv(v1), deriv(v2)
    assert deriv(-v1) == -d1
    a, b = rng.normal(size=2)
    w = a * v1 + b * v2
    scale = 1 + abs(a * d1) + abs(b * d2)
    assert abs(deriv(_unit(w)) * np.linalg.norm(w) - (a * d1 + b * d2)) <= 1e-12 * scale


def test_rejects_non_unit_direction():
    samples, prior, ref_prior, _ = gaussian_study(0)
    jac = fs.ScoreJacobianField.from_expfam(prior)
    with pytest.raises(ContractError, match="unit"):
        fs.directional_derivative(samples, ref_prior, ref_prior, jac, [1.0, 1.0])
    with pytest.raises(ContractError):
        fs.directional_derivative(samples, ref_prior, ref_prior, jac, [1.0])


def test_jacobian_field_is_transposed_grad_t(rng):
    prior = fs.gaussian_family([0.0, 1.0], [[1.0, 0.2], [0.2, 2.0]])
    jac = fs.ScoreJacobianField.from_expfam(prior)
    theta = rng.normal(size=2)
    np.testing.assert_array_equal(jac(theta), prior.jacobian(theta).T)


def test_custom_jacobian_field(rng):
    # score of N(mu, 1) in mu is (theta - mu); its Jacobian in mu is 1
    jac = fs.ScoreJacobianField(1, 1, fn=lambda t: np.array([[1.0]]))
    X = rng.normal(size=(30, 1))
    samples = fs.SampleSet(X)
    ref, cand = P(-X), P(-(X - 0.2))
    d = fs.directional_derivative(samples, ref, cand, jac, [1.0])
    # FD(mu) = mu^2 so the derivative at 0.2 is 0.4
    assert d == pytest.approx(0.4, rel=1e-14)
