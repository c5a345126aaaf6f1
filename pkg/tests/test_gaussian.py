import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, linalg, stats

import fdsense as fs
from fdsense.errors import ContractError, DomainError
from oracles import central_diff

G = fs.GaussianDist


def _random_dist(rng, d, cond=10.0):
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    w = np.exp(rng.uniform(0, np.log(cond), size=d))
    w[0], w[-1] = 1.0, cond if d > 1 else 1.0
    return G(rng.normal(size=d), (Q * w) @ Q.T * rng.uniform(0.5, 2))


# --- conjugate update -----------------------------------------------------

def test_conjugate_no_data_recovers_prior():
    lam = fs.gaussian_natural_from_moment([2.0], [[16.0]])
    post = fs.conjugate_posterior_from_natural(lam, [[4.0]], [0.0], 0)
    assert post.mean[0] == pytest.approx(2.0, rel=1e-15) and post.cov[0, 0] == pytest.approx(16.0, rel=1e-15)


def test_conjugate_hand_example():
    post = fs.conjugate_posterior([0.0], [[-0.5]], [[1.0]], [1.0], 1)
    assert post.mean.tolist() == [0.5] and post.cov.tolist() == [[0.5]]


def test_conjugate_study_variance():
    lam = fs.gaussian_natural_from_moment([2.0], [[16.0]])
    post = fs.conjugate_posterior_from_natural(lam, [[4.0]], [3.1], 100)
    assert post.cov[0, 0] == pytest.approx(1.0 / (1 / 16 + 25), rel=1e-14)


def test_conjugate_matches_grid_posterior():
    rng = np.random.default_rng(1)
    x = rng.normal(3.0, 2.0, size=20)
    grid = np.linspace(-5, 10, 200_001)
    logpost = stats.norm.logpdf(grid, 2.0, 4.0) + stats.norm.logpdf(x[:, None], grid, 2.0).sum(axis=0)
    w = np.exp(logpost - logpost.max())
    w /= w.sum()
    mean = np.sum(w * grid)
    var = np.sum(w * (grid - mean) ** 2)
    post = fs.conjugate_posterior(*np.split(fs.gaussian_natural_from_moment([2.0], [[16.0]]), 2), [[4.0]], [x.mean()], 20)
    assert post.mean[0] == pytest.approx(mean, rel=1e-8)
    assert post.cov[0, 0] == pytest.approx(var, rel=1e-6)


def test_conjugate_rejects_improper_posterior():
    with pytest.raises(DomainError):
        fs.conjugate_posterior([0.0], [[1.0]], [[1.0]], [0.0], 0)


# --- Fisher divergence ----------------------------------------------------

def test_fd_equal():
    p = G([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
    assert fs.fd_gaussian(p, p) == 0.0


def test_fd_mean_shift():
    assert fs.fd_gaussian(G([0.0], [[1.0]]), G([1.0], [[1.0]])) == 1.0


def test_fd_variance_change():
    assert fs.fd_gaussian(G([0.0], [[1.0]]), G([0.0], [[2.0]])) == 0.25


def test_fd_matches_quadrature():
    p, q = G([0.3], [[1.7]]), G([-1.1], [[0.6]])
    sp, sq = np.sqrt(1.7), np.sqrt(0.6)
    integrand = lambda t: stats.norm.pdf(t, 0.3, sp) * ((-(t - 0.3) / 1.7) - (-(t + 1.1) / 0.6)) ** 2
    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
    assert fs.fd_gaussian(p, q) == pytest.approx(val, rel=1e-10)


def test_fd_monte_carlo_unit_shift():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(1_000_000, 1))
    assert np.mean((-X + (X - 1)) ** 2) == pytest.approx(fs.fd_gaussian(G([0.0], [[1.0]]), G([1.0], [[1.0]])), rel=0.01)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_fd_specialisations(seed, d):
    rng = np.random.default_rng(seed)
    p, q = _random_dist(rng, d), _random_dist(rng, d)
    same_mean = G(p.mean, q.cov)
    D = q.precision - p.precision
    assert fs.fd_gaussian(p, same_mean) == pytest.approx(np.trace(D @ D @ p.cov), rel=1e-10, abs=1e-12)
    same_cov = G(q.mean, p.cov)
    s = p.precision @ (q.mean - p.mean)
    assert fs.fd_gaussian(p, same_cov) == pytest.approx(s @ s, rel=1e-10, abs=1e-12)
    assert fs.fd_gaussian(p, q) > 0


@pytest.mark.parametrize("d", [1, 2, 5, 10])
def test_fd_monte_carlo_agreement(d):
    rng = np.random.default_rng(100 + d)
    p, q = _random_dist(rng, d), _random_dist(rng, d)
    X = p.sample(100_000, rng)
    est = fs.estimate_fd(
        fs.PrecomputedScores(fs.gaussian_score_field(p).many(X)),
        fs.PrecomputedScores(fs.gaussian_score_field(q).many(X)),
    )
    assert est.value == pytest.approx(fs.fd_gaussian(p, q), rel=0.05)


# --- KL -------------------------------------------------------------------

def test_kl_examples():
    assert fs.kl_gaussian(G([0.5], [[2.0]]), G([0.5], [[2.0]])) == 0.0
    assert fs.kl_gaussian(G([0.0], [[1.0]]), G([1.0], [[1.0]])) == 0.5
    e2 = np.exp(2.0)
    assert fs.kl_gaussian(G([0.0], [[1.0]]), G([0.0], [[e2]])) == pytest.approx(0.5 * (np.exp(-2.0) - 1 + 2), rel=1e-14)


def test_kl_matches_quadrature():
    p, q = (0.4, 1.3), (-0.7, 0.5)
    f = lambda t: stats.norm.pdf(t, p[0], p[1]) * (stats.norm.logpdf(t, p[0], p[1]) - stats.norm.logpdf(t, q[0], q[1]))
    val, _ = integrate.quad(f, -30, 30, epsabs=1e-13, epsrel=1e-13, limit=200)
    assert fs.kl_gaussian(G([p[0]], [[p[1] ** 2]]), G([q[0]], [[q[1] ** 2]])) == pytest.approx(val, rel=1e-10)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
def test_kl_non_negative(seed, d):
    rng = np.random.default_rng(seed)
    p, q = _random_dist(rng, d), _random_dist(rng, d)
    assert fs.kl_gaussian(p, q) > 0
    assert abs(fs.kl_gaussian(p, p)) <= 1e-12


# --- Wasserstein ----------------------------------------------------------

def test_w2_examples():
    p = G([0.0], [[1.0]])
    assert fs.w2_gaussian(p, p) == 0.0
    assert fs.w2_gaussian(p, G([3.0], [[1.0]])) == 3.0
    assert fs.w2_gaussian(p, G([0.0], [[4.0]])) == 1.0


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
def test_w2_matches_scipy_sqrtm_and_is_symmetric(seed, d):
    rng = np.random.default_rng(seed)
    p, q = _random_dist(rng, d), _random_dist(rng, d)
    rq = np.real(linalg.sqrtm(q.cov))
    cross = np.real(linalg.sqrtm(rq @ p.cov @ rq))
    dmu = p.mean - q.mean
    oracle = np.sqrt(dmu @ dmu + np.trace(p.cov + q.cov - 2 * cross))
    assert fs.w2_gaussian(p, q) == pytest.approx(oracle, rel=1e-8)
    assert fs.w2_gaussian(p, q) == pytest.approx(fs.w2_gaussian(q, p), rel=1e-10)


def test_dimension_mismatch():
    for f in (fs.fd_gaussian, fs.kl_gaussian, fs.w2_gaussian):
        with pytest.raises(ContractError):
            f(G([0.0], [[1.0]]), G([0.0, 0.0], np.eye(2)))


# --- score field ----------------------------------------------------------

def test_score_field_examples(rng):
    assert fs.gaussian_score_field(G([0.0], [[1.0]]))([2.0]).tolist() == [-2.0]
    g = G([1.0, -2.0], [[2.0, 0.4], [0.4, 1.0]])
    assert np.all(fs.gaussian_score_field(g)(g.mean) == 0)
    for _ in range(10):
        t = rng.normal(size=2)
        oracle = central_diff(lambda x: stats.multivariate_normal(g.mean, g.cov).logpdf(x), t)
        assert np.max(np.abs(fs.gaussian_score_field(g)(t) - oracle)) <= 1e-6


def test_non_spd_covariance_rejected():
    with pytest.raises(DomainError):
        G([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])
