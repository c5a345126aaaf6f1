"""Closed-form conjugate Gaussian machinery and divergences.

Used as oracles for the sample-based estimators and as diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError
from .scores import ScoreField, _as_spd, split_gaussian_natural


@dataclass(frozen=True, eq=False)
class GaussianDist:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).ravel().copy()
        cov = _as_spd(self.cov, mean.size, "covariance").copy()
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def precision(self) -> np.ndarray:
        P = np.linalg.inv(self.cov)
        return 0.5 * (P + P.T)

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        L = np.linalg.cholesky(self.cov)
        return self.mean + rng.standard_normal((m, self.dim)) @ L.T


def conjugate_posterior(lambda_0, Lambda_1, cov_lik, xbar, n: int) -> GaussianDist:
    """Posterior of ``theta`` under prior natural params and ``n`` obs of ``N(theta, cov_lik)``.

    ``Sigma_n = (-2 Lambda_1 + n cov_lik^{-1})^{-1}`` and
    ``mu_n = Sigma_n (lambda_0 + n cov_lik^{-1} xbar)``.
    """
    lambda_0 = np.atleast_1d(np.asarray(lambda_0, dtype=float))
    d = lambda_0.size
    if n < 0:
        raise ContractError(f"n must be non-negative, got {n}")
    lik_prec = np.linalg.inv(_as_spd(cov_lik, d, "likelihood covariance"))
    prec = -2.0 * np.atleast_2d(np.asarray(Lambda_1, dtype=float)) + n * lik_prec
    prec = 0.5 * (prec + prec.T)
    try:
        np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise DomainError("posterior precision -2 Lambda_1 + n Sigma_l^{-1} is not positive definite") from None
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
    return GaussianDist(cov @ (lambda_0 + n * lik_prec @ xbar), cov)


def conjugate_posterior_from_natural(lam, cov_lik, xbar, n: int) -> GaussianDist:
    """As :func:`conjugate_posterior` with a flattened natural vector."""
    d = np.atleast_1d(np.asarray(xbar, dtype=float)).size
    l0, L1 = split_gaussian_natural(lam, d)
    return conjugate_posterior(l0, L1, cov_lik, xbar, n)


def _pair(p: GaussianDist, q: GaussianDist) -> None:
    if p.dim != q.dim:
        raise ContractError(f"dimension mismatch: {p.dim} vs {q.dim}")


def fd_gaussian(p: GaussianDist, q: GaussianDist) -> float:
    """Fisher divergence ``FD(p || q)``, expectation under ``p``.

    ``||Sigma_q^{-1}(mu_q - mu_p)||^2 + tr((Sigma_q^{-1} - Sigma_p^{-1})^2 Sigma_p)``.
    Not symmetric; pass the reference as ``p``.
    """
    _pair(p, q)
    Pq, Pp = q.precision, p.precision
    shift = Pq @ (q.mean - p.mean)
    D = Pq - Pp
    return float(shift @ shift + np.trace(D @ D @ p.cov))


def kl_gaussian(p: GaussianDist, q: GaussianDist) -> float:
    """``KL(p || q)``."""
    _pair(p, q)
    Pq = q.precision
    dmu = q.mean - p.mean
    _, logdet_q = np.linalg.slogdet(q.cov)
    _, logdet_p = np.linalg.slogdet(p.cov)
    return float(0.5 * (np.trace(Pq @ p.cov) + dmu @ Pq @ dmu - p.dim + logdet_q - logdet_p))


def sqrtm_psd(S: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition, negative eigenvalues floored at 0."""
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def w2_gaussian(p: GaussianDist, q: GaussianDist) -> float:
    """2-Wasserstein distance (not squared) between two Gaussians."""
    _pair(p, q)
    rq = sqrtm_psd(q.cov)
    cross = sqrtm_psd(rq @ p.cov @ rq)
    dmu = p.mean - q.mean
    sq = dmu @ dmu + np.trace(p.cov + q.cov - 2.0 * cross)
    return float(np.sqrt(max(sq, 0.0)))


def gaussian_score_field(g: GaussianDist) -> ScoreField:
    """Score ``-Sigma^{-1}(theta - mu)``."""
    P, mu = g.precision, g.mean
    return ScoreField(g.dim, lambda x: -P @ (x - mu), lambda X: -(X - mu) @ P.T, name="gaussian")
