"""Score-function building blocks.

Parameter points are plain 1-d float arrays of length ``d_theta``; sample
sets, precomputed score matrices, score fields, exponential-family priors,
linear losses and the Gaussian-copula perturbation are defined here together
with the natural-parameter maps used to express neighbourhoods.

Natural-parameter layout
------------------------
* multivariate Gaussian ``N(mu, Sigma)`` on ``d`` coordinates: the ``d``
  entries of ``lambda_0 = Sigma^{-1} mu`` followed by the ``d*d`` entries of
  ``Lambda_1 = -Sigma^{-1}/2`` in row-major order. The sufficient statistic
  is ``T(theta) = [theta, vec(theta theta^T)]`` in the same order.
* inverse gamma ``InvGamma(a, b)``: ``(-(a+1), -b)`` paired with
  ``T(sigma) = (log sigma, 1/sigma)``.
* product priors: factor blocks concatenated in the order given.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtri

from ._sum import exact_mean
from .errors import ContractError, DomainError, EvaluationError

Array = np.ndarray

_SQRT2PI = np.sqrt(2.0 * np.pi)


def as_point(theta, dim: Optional[int] = None) -> Array:
    """Validate and return a parameter point as a 1-d float array."""
    x = np.atleast_1d(np.asarray(theta, dtype=float))
    if x.ndim != 1 or x.size < 1:
        raise ContractError(f"parameter point must be a non-empty vector, got shape {x.shape}")
    if dim is not None and x.size != dim:
        raise ContractError(f"parameter point has dimension {x.size}, expected {dim}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"parameter point {x.tolist()} has non-finite entries")
    return x


def _check_finite(value: Array, theta: Array, what: str) -> Array:
    if not np.all(np.isfinite(value)):
        raise EvaluationError(f"{what} is non-finite at theta={np.asarray(theta).tolist()}")
    return value


# ---------------------------------------------------------------------------
# samples and precomputed scores
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampleSet:
    """``m x d_theta`` draws from the reference posterior.

    ``origin`` is ``"iid"`` or ``"mcmc"``; ``chain_ids`` optionally labels
    the chain each row came from (used only by autocorrelation diagnostics).
    """

    draws: Array
    origin: str = "iid"
    chain_ids: Optional[Array] = None

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float)
        if draws.ndim == 1:
            draws = draws[:, None]
        if draws.ndim != 2 or draws.shape[0] < 1 or draws.shape[1] < 1:
            raise ContractError(f"draws must be an m x d matrix with m, d >= 1, got shape {draws.shape}")
        if not np.all(np.isfinite(draws)):
            bad = np.argwhere(~np.isfinite(draws))[0]
            raise DomainError(f"non-finite draw at row {bad[0]}, column {bad[1]}")
        if self.origin not in ("iid", "mcmc"):
            raise ContractError(f"origin must be 'iid' or 'mcmc', got {self.origin!r}")
        draws.setflags(write=False)
        object.__setattr__(self, "draws", draws)
        if self.chain_ids is not None:
            ids = np.asarray(self.chain_ids, dtype=np.int64).ravel()
            if ids.size != draws.shape[0]:
                raise ContractError(f"chain_ids has length {ids.size}, expected {draws.shape[0]}")
            ids.setflags(write=False)
            object.__setattr__(self, "chain_ids", ids)

    @property
    def m(self) -> int:
        return self.draws.shape[0]

    @property
    def dim(self) -> int:
        return self.draws.shape[1]


@dataclass(frozen=True, eq=False)
class PrecomputedScores:
    """Score (or gradient) values aligned row-wise with a :class:`SampleSet`."""

    values: Array
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ContractError(f"score matrix must be 2-d, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise EvaluationError(f"non-finite score in {self.label or 'scores'} at row {bad[0]}, column {bad[1]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# score fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScoreField:
    """A map ``theta -> grad log p(theta)`` of fixed dimension.

    ``fn`` evaluates a single point. ``batch_fn``, when given, evaluates an
    ``(m, dim)`` array at once and must agree with ``fn`` row by row.
    """

    dim: int
    fn: Callable[[Array], Array]
    batch_fn: Optional[Callable[[Array], Array]] = None
    name: str = ""

    def __call__(self, theta) -> Array:
        x = as_point(theta, self.dim)
        out = np.asarray(self.fn(x), dtype=float).reshape(-1)
        if out.size != self.dim:
            raise ContractError(f"score field {self.name!r} returned length {out.size}, expected {self.dim}")
        return _check_finite(out, x, f"score field {self.name!r}")

    def many(self, X: Array) -> Array:
        X = np.asarray(X, dtype=float)
        if self.batch_fn is None:
            return np.stack([self(row) for row in X])
        return np.asarray(self.batch_fn(X), dtype=float).reshape(X.shape[0], self.dim)


def zero_field(dim: int) -> ScoreField:
    return ScoreField(dim, lambda x: np.zeros(dim), lambda X: np.zeros((len(X), dim)), name="zero")


def posterior_score(prior: ScoreField, loss_grad: ScoreField, theta) -> Array:
    """Score of ``exp(-L(theta)) pi(theta)``: ``s_pi(theta) - grad L(theta)``.

    ``loss_grad`` evaluates the gradient of the loss ``L`` (not of ``-L``).
    """
    if prior.dim != loss_grad.dim:
        raise ContractError(f"prior field has dim {prior.dim} but loss field has dim {loss_grad.dim}")
    x = as_point(theta, prior.dim)
    return prior(x) - loss_grad(x)


def eval_scores_over_samples(field: ScoreField, samples: SampleSet, label: str = "") -> PrecomputedScores:
    """Evaluate ``field`` at every draw; row ``i`` is ``field(draws[i])``."""
    if field.dim != samples.dim:
        raise ContractError(f"score field has dim {field.dim} but samples have d_theta={samples.dim}")
    out = np.empty((samples.m, field.dim))
    for i, row in enumerate(samples.draws):
        try:
            out[i] = field(row)
        except (EvaluationError, DomainError) as exc:
            raise type(exc)(f"row {i}: {exc}") from None
    return PrecomputedScores(out, label or field.name)


def gaussian_logpdf_score(mean, cov) -> ScoreField:
    """Score field ``-Sigma^{-1}(theta - mu)`` of a multivariate normal."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    prec = np.linalg.inv(_as_spd(cov, mean.size, "covariance"))
    return ScoreField(mean.size, lambda x: -prec @ (x - mean), lambda X: -(X - mean) @ prec.T, name="gaussian")


def half_cauchy_score(sigma, scale: float = 1.0) -> Array:
    """Score of HalfCauchy(0, scale) on sigma > 0: ``-2 sigma / (scale^2 + sigma^2)``."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise DomainError("half-Cauchy score requires sigma > 0")
    return -2.0 * sigma / (scale * scale + sigma * sigma)


def half_cauchy_field(scale: float = 1.0) -> ScoreField:
    return ScoreField(1, lambda x: half_cauchy_score(x, scale), lambda X: half_cauchy_score(X, scale), name="half_cauchy")


# ---------------------------------------------------------------------------
# exponential-family priors
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExpFamilyPrior:
    """Prior ``exp(lambda_pi . T(theta) + log g(theta) - log h(lambda_pi))``.

    ``grad_T(theta)`` returns the ``d_T x d_theta`` Jacobian of ``T``. The
    log-partition ``h`` is never needed for scores and is not stored.
    ``blocks`` records ``(name, theta_coords, lambda_slice)`` per factor for
    product priors; ``names`` labels each natural parameter.
    """

    d_theta: int
    lambda_pi: Array
    T: Callable[[Array], Array]
    grad_T: Callable[[Array], Array]
    grad_log_g: Optional[Callable[[Array], Array]] = None
    batch_grad_T: Optional[Callable[[Array], Array]] = None
    batch_grad_log_g: Optional[Callable[[Array], Array]] = None
    names: tuple = ()
    blocks: tuple = ()

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambda_pi, dtype=float)).copy()
        lam.setflags(write=False)
        object.__setattr__(self, "lambda_pi", lam)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"lambda[{k}]" for k in range(lam.size)))
        if len(self.names) != lam.size:
            raise ContractError(f"{len(self.names)} names for {lam.size} natural parameters")

    @property
    def d_T(self) -> int:
        return self.lambda_pi.size

    def with_lambda(self, lam) -> "ExpFamilyPrior":
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.size != self.d_T:
            raise ContractError(f"natural parameter has length {lam.size}, expected {self.d_T}")
        return replace(self, lambda_pi=lam)

    def jacobian(self, theta) -> Array:
        x = as_point(theta, self.d_theta)
        J = np.asarray(self.grad_T(x), dtype=float).reshape(self.d_T, self.d_theta)
        return _check_finite(J, x, "sufficient-statistic Jacobian")

    def log_g_gradient(self, theta) -> Array:
        x = as_point(theta, self.d_theta)
        if self.grad_log_g is None:
            return np.zeros(self.d_theta)
        return _check_finite(np.asarray(self.grad_log_g(x), dtype=float).reshape(self.d_theta), x, "base-measure gradient")

    def jacobian_many(self, X: Array) -> Array:
        """``(m, d_T, d_theta)`` stack of Jacobians."""
        X = np.asarray(X, dtype=float)
        if self.batch_grad_T is not None:
            out = np.asarray(self.batch_grad_T(X), dtype=float)
        else:
            out = np.stack([self.jacobian(row) for row in X])
        _check_batch(out, "sufficient-statistic Jacobian")
        return out

    def log_g_gradient_many(self, X: Array) -> Array:
        X = np.asarray(X, dtype=float)
        if self.grad_log_g is None:
            return np.zeros((X.shape[0], self.d_theta))
        if self.batch_grad_log_g is not None:
            out = np.asarray(self.batch_grad_log_g(X), dtype=float)
        else:
            out = np.stack([self.log_g_gradient(row) for row in X])
        _check_batch(out, "base-measure gradient")
        return out

    def score(self, theta) -> Array:
        return expfam_prior_score(self, theta)

    def score_many(self, X: Array, lam=None) -> Array:
        lam = self.lambda_pi if lam is None else np.asarray(lam, dtype=float)
        return np.einsum("mkd,k->md", self.jacobian_many(X), lam) + self.log_g_gradient_many(X)

    def score_field(self) -> ScoreField:
        return ScoreField(self.d_theta, self.score, self.score_many, name="expfam_prior")


def _check_batch(out: Array, what: str) -> None:
    if not np.all(np.isfinite(out)):
        row = np.argwhere(~np.isfinite(out.reshape(out.shape[0], -1)))[0][0]
        raise EvaluationError(f"{what} is non-finite at sample row {row}")


def expfam_prior_score(prior: ExpFamilyPrior, theta) -> Array:
    """``grad_T(theta)^T lambda_pi + grad log g(theta)``."""
    x = as_point(theta, prior.d_theta)
    s = prior.jacobian(x).T @ prior.lambda_pi + prior.log_g_gradient(x)
    return _check_finite(s, x, "exponential-family prior score")


def _as_spd(mat, d: int, what: str) -> Array:
    S = np.atleast_2d(np.asarray(mat, dtype=float))
    if S.shape != (d, d):
        raise ContractError(f"{what} has shape {S.shape}, expected {(d, d)}")
    if not np.all(np.isfinite(S)) or not np.allclose(S, S.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(S).max())):
        raise DomainError(f"{what} must be finite and symmetric")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise DomainError(f"{what} is not positive definite") from None
    return S


def gaussian_natural_from_moment(mu, cov) -> Array:
    """Flattened ``(Sigma^{-1} mu, -Sigma^{-1}/2)`` with ``Lambda_1`` row-major.

    >>> gaussian_natural_from_moment(2.0, 16.0)
    array([ 0.125  , -0.03125])
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    d = mu.size
    prec = np.linalg.inv(_as_spd(cov, d, "covariance"))
    prec = 0.5 * (prec + prec.T)
    return np.concatenate([prec @ mu, (-0.5 * prec).ravel()])


def split_gaussian_natural(lam, d: int) -> tuple[Array, Array]:
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size != d + d * d:
        raise ContractError(f"Gaussian natural vector for d={d} needs {d + d * d} entries, got {lam.size}")
    return lam[:d].copy(), lam[d:].reshape(d, d).copy()


def gaussian_moment_from_natural(lambda_0, Lambda_1) -> tuple[Array, Array]:
    """Return ``(mu, Sigma)`` with ``Sigma = (-2 Lambda_1)^{-1}``, ``mu = Sigma lambda_0``."""
    lambda_0 = np.atleast_1d(np.asarray(lambda_0, dtype=float))
    d = lambda_0.size
    try:
        prec = _as_spd(-2.0 * np.atleast_2d(np.asarray(Lambda_1, dtype=float)), d, "-2 Lambda_1")
    except DomainError:
        raise DomainError("Lambda_1 must be symmetric negative definite") from None
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    return cov @ lambda_0, cov


def invgamma_natural_from_shape_rate(a: float, b: float) -> Array:
    if not (a > 0 and b > 0) or not np.isfinite(a) or not np.isfinite(b):
        raise DomainError(f"inverse-gamma shape and rate must be positive, got a={a}, b={b}")
    return np.array([-(a + 1.0), -float(b)])


def invgamma_shape_rate_from_natural(lam) -> tuple[float, float]:
    lam = np.asarray(lam, dtype=float).ravel()
    a, b = -lam[0] - 1.0, -lam[1]
    if not (a > 0 and b > 0):
        raise DomainError(f"natural parameters {lam.tolist()} do not define an inverse gamma")
    return float(a), float(b)


def gaussian_family(mu, cov=None, *, natural=None, prefix: str = "") -> ExpFamilyPrior:
    """Gaussian prior in natural form on ``d`` coordinates.

    Give either moments ``(mu, cov)`` or ``natural`` together with the
    dimension through ``mu`` (``mu`` is then only used for its length).
    """
    d = np.atleast_1d(np.asarray(mu, dtype=float)).size
    lam = gaussian_natural_from_moment(mu, cov) if natural is None else np.asarray(natural, dtype=float)
    if lam.size != d + d * d:
        raise ContractError(f"Gaussian family on {d} coordinates needs {d + d * d} natural parameters")
    idx = np.arange(d)
    rows = np.repeat(idx, d)
    cols = np.tile(idx, d)

    def T(x):
        return np.concatenate([x, np.outer(x, x).ravel()])

    def grad_T_many(X):
        m = X.shape[0]
        J = np.zeros((m, d + d * d, d))
        J[:, idx, idx] = 1.0
        k = d + np.arange(d * d)
        # d(theta_r theta_c)/dtheta = theta_c e_r + theta_r e_c
        J[:, k, rows] += X[:, cols]
        J[:, k, cols] += X[:, rows]
        return J

    names = [f"{prefix}lambda0[{i}]" for i in range(d)]
    names += [f"{prefix}Lambda1[{r},{c}]" for r, c in zip(rows, cols)]
    return ExpFamilyPrior(
        d_theta=d,
        lambda_pi=lam,
        T=T,
        grad_T=lambda x: grad_T_many(x[None, :])[0],
        batch_grad_T=grad_T_many,
        names=tuple(names),
    )


def invgamma_family(a: float | None = None, b: float | None = None, *, natural=None, prefix: str = "") -> ExpFamilyPrior:
    """Inverse-gamma prior on a single positive coordinate."""
    lam = invgamma_natural_from_shape_rate(a, b) if natural is None else np.asarray(natural, dtype=float)

    def T(x):
        if x[0] <= 0:
            raise DomainError(f"inverse-gamma support is sigma > 0, got {x[0]}")
        return np.array([np.log(x[0]), 1.0 / x[0]])

    def grad_T_many(X):
        s = X[:, 0]
        if np.any(s <= 0):
            row = int(np.argmax(s <= 0))
            raise DomainError(f"inverse-gamma support is sigma > 0, got {s[row]} at row {row}")
        return np.stack([1.0 / s, -1.0 / (s * s)], axis=1)[:, :, None]

    return ExpFamilyPrior(
        d_theta=1,
        lambda_pi=lam,
        T=T,
        grad_T=lambda x: grad_T_many(x[None, :])[0],
        batch_grad_T=grad_T_many,
        names=(f"{prefix}lambda_sigma1", f"{prefix}lambda_sigma2"),
    )


def product_family(factors: Sequence[tuple[str, Sequence[int], ExpFamilyPrior]], d_theta: int) -> ExpFamilyPrior:
    """Independent product of exponential-family factors.

    ``factors`` holds ``(name, theta_coords, family)``; each coordinate may
    belong to at most one factor. Coordinates owned by no factor get a zero
    prior score contribution.
    """
    if not factors:
        raise ContractError("product prior needs at least one factor")
    seen: set[int] = set()
    blocks = []
    offset = 0
    for name, coords, fam in factors:
        coords = [int(c) for c in coords]
        if len(coords) != fam.d_theta:
            raise ContractError(f"factor {name!r} acts on {fam.d_theta} coordinates but {len(coords)} given")
        if any(c < 0 or c >= d_theta for c in coords) or seen.intersection(coords):
            raise ContractError(f"factor {name!r} coordinates {coords} overlap or are out of range")
        seen.update(coords)
        blocks.append((name, tuple(coords), slice(offset, offset + fam.d_T), fam))
        offset += fam.d_T
    d_T = offset
    lam = np.concatenate([fam.lambda_pi for _, _, _, fam in blocks])
    names = tuple(f"{name}.{n}" for name, _, _, fam in blocks for n in fam.names)

    def T(x):
        return np.concatenate([fam.T(x[list(c)]) for _, c, _, fam in blocks])

    def grad_T_many(X):
        J = np.zeros((X.shape[0], d_T, d_theta))
        for _, c, sl, fam in blocks:
            J[:, sl, list(c)] = fam.jacobian_many(X[:, list(c)])
        return J

    def grad_log_g_many(X):
        G = np.zeros((X.shape[0], d_theta))
        for _, c, _, fam in blocks:
            G[:, list(c)] += fam.log_g_gradient_many(X[:, list(c)])
        return G

    has_g = any(fam.grad_log_g is not None for *_, fam in blocks)
    return ExpFamilyPrior(
        d_theta=d_theta,
        lambda_pi=lam,
        T=T,
        grad_T=lambda x: grad_T_many(x[None, :])[0],
        grad_log_g=(lambda x: grad_log_g_many(x[None, :])[0]) if has_g else None,
        batch_grad_T=grad_T_many,
        batch_grad_log_g=grad_log_g_many if has_g else None,
        names=names,
        blocks=tuple((name, c, sl) for name, c, sl, _ in blocks),
    )


# ---------------------------------------------------------------------------
# linear losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearLoss:
    """Loss ``L(theta; x, lambda_L) = lambda_L . l(theta; x)``.

    ``grad_l(theta)`` returns the ``d_L x d_theta`` Jacobian of ``l``. Use
    :meth:`from_values` when gradients were computed externally at the
    sample rows.
    """

    lambda_L: Array
    d_theta: int
    grad_l: Optional[Callable[[Array], Array]] = None
    batch_grad_l: Optional[Callable[[Array], Array]] = None
    names: tuple = ()

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambda_L, dtype=float)).copy()
        lam.setflags(write=False)
        object.__setattr__(self, "lambda_L", lam)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"lambda_L[{k}]" for k in range(lam.size)))
        if self.grad_l is None and self.batch_grad_l is None:
            raise ContractError("a linear loss needs grad_l or batch_grad_l")

    @property
    def d_L(self) -> int:
        return self.lambda_L.size

    @classmethod
    def from_values(cls, grads, lambda_L) -> "LinearLoss":
        """Loss backed by precomputed gradients.

        ``grads`` is a list of ``d_L`` :class:`PrecomputedScores` (one per
        loss component) or an ``(m, d_L, d_theta)`` array.
        """
        if isinstance(grads, (list, tuple)):
            G = np.stack([np.asarray(g.values if isinstance(g, PrecomputedScores) else g, dtype=float) for g in grads], axis=1)
        else:
            G = np.asarray(grads, dtype=float)
        if G.ndim != 3:
            raise ContractError(f"loss gradients must be (m, d_L, d_theta), got shape {G.shape}")
        G.setflags(write=False)

        def batch(X):
            if X.shape[0] != G.shape[0]:
                raise ContractError(f"precomputed loss gradients hold m={G.shape[0]} rows, asked for {X.shape[0]}")
            return G

        return cls(lambda_L, G.shape[2], batch_grad_l=batch)

    def jacobian_many(self, X: Array) -> Array:
        X = np.asarray(X, dtype=float)
        if self.batch_grad_l is not None:
            out = np.asarray(self.batch_grad_l(X), dtype=float)
        else:
            out = np.stack([np.asarray(self.grad_l(as_point(r, self.d_theta)), dtype=float).reshape(self.d_L, self.d_theta) for r in X])
        if out.shape != (X.shape[0], self.d_L, self.d_theta):
            raise ContractError(f"loss Jacobians have shape {out.shape}, expected {(X.shape[0], self.d_L, self.d_theta)}")
        _check_batch(out, "loss gradient")
        return out

    def gradient_many(self, X: Array, lam=None) -> Array:
        """``grad_theta L`` at each row, i.e. ``lambda_L^T grad l``."""
        lam = self.lambda_L if lam is None else np.asarray(lam, dtype=float)
        return np.einsum("mkd,k->md", self.jacobian_many(X), lam)


# ---------------------------------------------------------------------------
# Gaussian copula perturbation
# ---------------------------------------------------------------------------

def normal_ppf(p) -> Array:
    """Standard-normal quantile ``Phi^{-1}(p)`` for ``p`` in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0) | ~(p < 1)):
        raise DomainError("normal quantile requires probabilities strictly inside (0, 1)")
    return ndtri(p)


def normal_pdf(z) -> Array:
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / _SQRT2PI


@dataclass(frozen=True)
class GaussianCopulaScore:
    """Gaussian-copula perturbation ``c_lambda(theta_i, theta_j)`` of a prior on (0, 1)^d.

    Injects correlation ``lambda_c`` between coordinates ``pair`` while
    leaving the marginals unchanged.
    """

    lambda_c: float
    pair: tuple[int, int]

    def __post_init__(self):
        if not np.isfinite(self.lambda_c) or abs(self.lambda_c) >= 1:
            raise DomainError(f"copula correlation must satisfy |lambda_c| < 1, got {self.lambda_c}")
        i, j = (int(k) for k in self.pair)
        if i == j or i < 0 or j < 0:
            raise ContractError(f"copula pair must be two distinct non-negative indices, got {self.pair}")
        object.__setattr__(self, "pair", (i, j))


def _copula_components(lam: float, ui: Array, uj: Array) -> tuple[Array, Array]:
    for name, u in (("i", ui), ("j", uj)):
        if np.any(~(u > 0) | ~(u < 1)):
            raise DomainError(f"copula coordinate {name} must lie in (0, 1)")
    zi, zj = normal_ppf(ui), normal_ppf(uj)
    denom = 1.0 - lam * lam
    gi = (lam * zj - lam * lam * zi) / (denom * normal_pdf(zi))
    gj = (lam * zi - lam * lam * zj) / (denom * normal_pdf(zj))
    return gi, gj


def copula_score(c: GaussianCopulaScore, theta) -> Array:
    """``grad_theta log c_lambda(theta_i, theta_j)``; zero off the pair."""
    x = as_point(theta)
    i, j = c.pair
    if max(i, j) >= x.size:
        raise ContractError(f"copula pair {c.pair} out of range for d_theta={x.size}")
    gi, gj = _copula_components(c.lambda_c, x[i], x[j])
    out = np.zeros_like(x)
    out[i], out[j] = gi, gj
    return out


def copula_score_many(c: GaussianCopulaScore, X: Array) -> Array:
    X = np.asarray(X, dtype=float)
    i, j = c.pair
    if max(i, j) >= X.shape[1]:
        raise ContractError(f"copula pair {c.pair} out of range for d_theta={X.shape[1]}")
    out = np.zeros_like(X)
    out[:, i], out[:, j] = _copula_components(c.lambda_c, X[:, i], X[:, j])
    return out


def copula_log_density(lambda_c: float, ui, uj) -> Array:
    """``log c_lambda(u_i, u_j)`` for the bivariate Gaussian copula."""
    zi, zj = normal_ppf(ui), normal_ppf(uj)
    denom = 1.0 - lambda_c * lambda_c
    return -0.5 * np.log(denom) + (2 * lambda_c * zi * zj - lambda_c ** 2 * (zi * zi + zj * zj)) / (2 * denom)


def copula_fd_objective(samples: SampleSet, pair: tuple[int, int]) -> Callable[[float], float]:
    """``lambda_c -> mean_i ||grad log c_lambda(theta_i)||^2`` over the draws.

    This is the empirical Fisher divergence between a reference prior and its
    copula-perturbed candidate when the loss is unchanged.
    """
    i, j = GaussianCopulaScore(0.0, pair).pair
    ui, uj = samples.draws[:, i], samples.draws[:, j]
    _copula_components(0.0, ui, uj)
    zi, zj = normal_ppf(ui), normal_ppf(uj)
    inv_pi, inv_pj = 1.0 / normal_pdf(zi), 1.0 / normal_pdf(zj)

    def objective(lam: float) -> float:
        lam = float(lam)
        if abs(lam) >= 1:
            raise DomainError(f"copula correlation must satisfy |lambda_c| < 1, got {lam}")
        denom = 1.0 - lam * lam
        gi = (lam * zj - lam * lam * zi) * inv_pi / denom
        gj = (lam * zi - lam * lam * zj) * inv_pj / denom
        return exact_mean(gi * gi + gj * gj)

    return objective
