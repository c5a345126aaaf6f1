import numpy as np
import pytest
from hypothesis import given, strategies as st

import fdsense as fs
from fdsense.errors import ContractError, NumericalError
from oracles import (
    direct_joint_fd,
    direct_prior_fd,
    gaussian_study,
    random_instance,
)


def test_evaluate_at_zero_is_c():
    q = fs.QuadraticObjective(np.eye(2), [1.0, 2.0], 3.5)
    assert fs.evaluate(q, [0.0, 0.0]) == 3.5


def test_evaluate_identity():
    assert fs.evaluate(fs.QuadraticObjective(np.eye(2), np.zeros(2), 0.0), [3.0, 4.0]) == 25.0


def test_evaluate_length_mismatch():
    with pytest.raises(ContractError):
        fs.evaluate(fs.QuadraticObjective(np.eye(2), np.zeros(2), 0.0), [1.0])


def test_evaluate_clamps_round_off_only():
    q = fs.QuadraticObjective([[1.0]], [-2.0], 1.0 - 1e-13)
    assert fs.evaluate(q, [1.0]) == 0.0
    q = fs.QuadraticObjective([[1.0]], [-2.0], 0.5)
    assert fs.evaluate(q, [1.0]) == -0.5


def test_single_sample_at_origin_prior_block():
    prior = fs.gaussian_family([0.0], [[1.0]])
    q = fs.build_prior_only(fs.SampleSet([[0.0]]), prior, fs.PrecomputedScores([[0.0]]))
    np.testing.assert_array_equal(q.A, [[1.0, 0.0], [0.0, 0.0]])


def test_two_sample_gram():
    prior = fs.gaussian_family([0.0], [[1.0]])
    q = fs.build_prior_only(fs.SampleSet([[0.0], [1.0]]), prior, fs.PrecomputedScores([[0.0], [0.0]]))
    np.testing.assert_array_equal(q.A, [[1.0, 1.0], [1.0, 2.0]])


def test_prior_only_zero_at_reference():
    samples, prior, ref_prior, _ = gaussian_study(0)
    q = fs.build_prior_only(samples, prior, ref_prior)
    assert fs.evaluate(q, prior.lambda_pi) == pytest.approx(0.0, abs=1e-12)


def test_joint_with_zero_loss_vanishes_at_reference(rng):
    samples, prior, ref_prior, _ = gaussian_study(1)
    loss = fs.LinearLoss.from_values(np.zeros((samples.m, 1, 1)), [1.0])
    q = fs.build_joint(samples, prior, loss, ref_prior)
    assert fs.evaluate(q, np.concatenate([[0.3], prior.lambda_pi])) == pytest.approx(0.0, abs=1e-12)


def test_prior_only_matches_large_monte_carlo():
    # reference prior N(2, 16); expectation under the posterior of the study
    samples, prior, ref_prior, post = gaussian_study(2)
    q = fs.build_prior_only(samples, prior, ref_prior)
    lam = fs.gaussian_natural_from_moment([0.5], [[9.0]])
    rng = np.random.default_rng(99)
    X = post.sample(1_000_000, rng)[:, 0]
    mc = np.mean((-(X - 2) / 16 - (lam[0] + 2 * lam[1] * X)) ** 2)
    assert fs.evaluate(q, lam) == pytest.approx(mc, rel=0.01)


def test_study_matches_direct_path():
    samples, prior, ref_prior, _ = gaussian_study(3)
    q = fs.build_prior_only(samples, prior, ref_prior)
    rng = np.random.default_rng(0)
    for _ in range(10):
        lam = np.array([rng.uniform(-3, 3), rng.uniform(-0.2, 0.05)])
        direct = direct_prior_fd(samples, prior, ref_prior, lam)
        assert abs(fs.evaluate(q, lam) - direct) <= 1e-8 * (1 + direct)


@given(st.integers(0, 2 ** 32 - 1))
def test_joint_matches_direct_path(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, m=60)
    q = fs.build_joint(inst.samples, inst.prior, inst.loss, inst.ref_posterior)
    assert q.dim == inst.loss.d_L + inst.prior.d_T <= 20
    assert q.psd_margin >= -1e-10
    for _ in range(3):
        lam = np.concatenate([inst.loss.lambda_L, inst.prior.lambda_pi]) + rng.normal(size=q.dim)
        direct = direct_joint_fd(inst.samples, inst.prior, inst.loss, inst.ref_posterior, lam)
        assert abs(fs.evaluate(q, lam) - direct) <= 1e-8 * (1 + direct)


def test_joint_blocks_layout(rng):
    inst = random_instance(rng, d_theta=4, with_invgamma=True)
    q = fs.build_joint(inst.samples, inst.prior, inst.loss, inst.ref_posterior)
    dL = inst.loss.d_L
    assert q.block("loss") == slice(0, dL)
    assert q.block("prior") == slice(dL, q.dim)
    assert q.block("ig") == slice(dL, dL + 2)
    assert q.names[dL:] == inst.prior.names


def test_loss_only_hand_example():
    samples = fs.SampleSet(np.zeros((10, 1)))
    loss = fs.LinearLoss.from_values(np.full((10, 1, 1), 2.0), [1.0])
    q = fs.build_loss_only(samples, loss, [1.0])
    for lam in (0.0, 0.9, 1.0, 1.3):
        assert fs.evaluate(q, [lam]) == pytest.approx(4 * (lam - 1) ** 2, rel=1e-15, abs=0)
    assert fs.evaluate(q, [1.0]) == 0.0


def test_loss_only_matches_direct_path(rng):
    inst = random_instance(rng, d_theta=3)
    q = fs.build_loss_only(inst.samples, inst.loss, inst.loss.lambda_L)
    G = inst.loss.jacobian_many(inst.samples.draws)
    for _ in range(10):
        lam = inst.loss.lambda_L + rng.normal(size=inst.loss.d_L)
        diff = np.einsum("mkd,k->md", G, lam - inst.loss.lambda_L)
        assert fs.evaluate(q, lam) == pytest.approx(np.mean(np.sum(diff ** 2, axis=1)), rel=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_loss_only_is_centred(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, d_theta=2, m=30)
    ref = inst.loss.lambda_L
    q = fs.build_loss_only(inst.samples, inst.loss, ref)
    v = rng.normal(size=ref.size)
    # ref +/- v are themselves rounded, so equality holds to rounding of the inputs
    assert fs.evaluate(q, ref + v) == pytest.approx(fs.evaluate(q, ref - v), rel=1e-13)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 1))
def test_convexity(seed, t):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, m=40)
    q = fs.build_prior_only(inst.samples, inst.prior, inst.ref_prior)
    l1, l2 = rng.normal(size=(2, q.dim)) * 3
    lhs = fs.evaluate(q, t * l1 + (1 - t) * l2)
    rhs = t * fs.evaluate(q, l1) + (1 - t) * fs.evaluate(q, l2)
    assert lhs <= rhs + 1e-10 * (1 + abs(rhs))


def test_prior_blocks_add_up_to_prior_only(rng):
    inst = random_instance(rng, d_theta=5, with_invgamma=True)
    q = fs.build_prior_only(inst.samples, inst.prior, inst.ref_prior)
    parts = fs.build_prior_only_blocks(inst.samples, inst.prior, inst.ref_prior)
    lam = inst.prior.lambda_pi + rng.normal(size=q.dim)
    total = sum(fs.evaluate(qk, lam[sl]) for (_, qk), (_, _, sl) in zip(parts, inst.prior.blocks))
    assert total == pytest.approx(fs.evaluate(q, lam), rel=1e-12)


def test_non_psd_matrix_is_rejected():
    from fdsense.quadratic import _check_psd

    with pytest.raises(NumericalError):
        _check_psd(fs.QuadraticObjective([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], 0.0))


def test_large_dimension_uses_iterative_eigensolver(rng):
    B = rng.normal(size=(80, 5))
    q = fs.QuadraticObjective(B @ B.T, np.zeros(80), 0.0)
    assert abs(q.min_eigenvalue) <= 1e-8 * q.norm


def test_count_evaluations():
    q = fs.QuadraticObjective(np.eye(2), np.zeros(2), 0.0)
    with fs.count_evaluations() as outer:
        fs.evaluate(q, [1.0, 1.0])
        with fs.count_evaluations() as inner:
            fs.evaluate_many(q, np.zeros((5, 2)), kind="vertex")
    assert outer.points == 6 and inner.points == 5
    assert outer.by_kind == {"other": 1, "vertex": 5}
