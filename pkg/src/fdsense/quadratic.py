"""Exact quadratic representation of the empirical Fisher divergence.

For a loss linear in ``lambda_L`` and an exponential-family prior with
natural parameter ``lambda_pi``, the candidate posterior score at a draw is
``J(theta) lambda + grad log g(theta)`` with
``J = [-grad l(theta)^T, grad T(theta)^T]``. The empirical Fisher
divergence is then ``lambda^T A lambda + b^T lambda + c`` with

    A = mean J^T J,   b = -2 mean J^T r,   c = mean ||r||^2,

where ``r = s_ref(theta) - grad log g(theta)``. Building costs
``O(m d_Lambda^2 d_theta)``.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._sum import exact_mean
from .errors import ContractError, EvaluationError, NumericalError
from .scores import ExpFamilyPrior, LinearLoss, PrecomputedScores, SampleSet

PSD_RTOL = 1e-10
DENSE_EIG_LIMIT = 64


class EvaluationCounter:
    """Counts hyperparameter points at which objectives are evaluated.

    ``points`` is the total; ``by_kind`` splits it by caller (``"vertex"``
    for supremum enumeration, ``"other"`` for everything else).
    """

    def __init__(self):
        self.points = 0
        self.by_kind: dict[str, int] = {}


_COUNTERS: list[EvaluationCounter] = []


@contextlib.contextmanager
def count_evaluations():
    """Context manager yielding an :class:`EvaluationCounter`.

    >>> with count_evaluations() as counter:
    ...     _ = evaluate(QuadraticObjective(np.eye(1), np.zeros(1), 0.0), [1.0])
    >>> counter.points
    1
    """
    counter = EvaluationCounter()
    _COUNTERS.append(counter)
    try:
        yield counter
    finally:
        _COUNTERS.remove(counter)


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """``lambda -> lambda^T A lambda + b^T lambda + c`` with ``A`` PSD.

    ``names`` labels the hyperparameters and ``blocks`` maps block names to
    slices of the hyperparameter vector (e.g. ``loss`` / ``prior`` or one
    entry per prior factor). When ``center`` is set the objective is known
    to equal ``(lambda - center)^T A (lambda - center)`` and is evaluated in
    that form.
    """

    A: np.ndarray
    b: np.ndarray
    c: float
    names: tuple = ()
    blocks: tuple = ()
    center: Optional[np.ndarray] = None
    min_eigenvalue: float = field(default=np.nan, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).ravel()
        d = b.size
        if A.shape != (d, d):
            raise ContractError(f"A has shape {A.shape} but b has length {d}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.isfinite(self.c)):
            raise EvaluationError("quadratic objective has non-finite coefficients")
        A = 0.5 * (A + A.T)
        A.setflags(write=False)
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))
        if not self.names:
            object.__setattr__(self, "names", tuple(f"lambda[{k}]" for k in range(d)))
        if len(self.names) != d:
            raise ContractError(f"{len(self.names)} names for {d} hyperparameters")
        if self.center is not None:
            ctr = np.asarray(self.center, dtype=float).ravel().copy()
            if ctr.size != d:
                raise ContractError(f"center has length {ctr.size}, expected {d}")
            ctr.setflags(write=False)
            object.__setattr__(self, "center", ctr)
        object.__setattr__(self, "min_eigenvalue", _min_eigenvalue(A))

    @property
    def dim(self) -> int:
        return self.b.size

    @property
    def norm(self) -> float:
        """Spectral norm of ``A``."""
        if self.dim == 0:
            return 0.0
        return float(np.linalg.norm(self.A, 2))

    @property
    def psd_margin(self) -> float:
        """``min eig(A) / ||A||_2`` (0 for ``A = 0``); non-negative up to round-off."""
        nrm = self.norm
        return 0.0 if nrm == 0 else self.min_eigenvalue / nrm

    def gradient(self, lam) -> np.ndarray:
        lam = _as_lambda(lam, self.dim)
        return 2.0 * self.A @ lam + self.b

    def block(self, name: str) -> slice:
        for block_name, sl in self.blocks:
            if block_name == name:
                return sl
        raise KeyError(name)


def _min_eigenvalue(A: np.ndarray) -> float:
    d = A.shape[0]
    if d == 0:
        return 0.0
    if d <= DENSE_EIG_LIMIT:
        return float(np.linalg.eigvalsh(A)[0])
    from scipy.sparse.linalg import eigsh

    v0 = np.ones(d) / np.sqrt(d)
    return float(eigsh(A, k=1, which="SA", v0=v0, return_eigenvectors=False, tol=1e-12)[0])


def _as_lambda(lam, d: int) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=float)).ravel()
    if lam.size != d:
        raise ContractError(f"hyperparameter vector has length {lam.size}, expected {d}")
    return lam


def _clamp(values: np.ndarray, c: float) -> np.ndarray:
    tol = 1e-10 * (1.0 + abs(c))
    return np.where((values < 0) & (values >= -tol), 0.0, values)


def evaluate_many(q: QuadraticObjective, lams, kind: str = "other") -> np.ndarray:
    """Evaluate ``q`` at each row of a ``(K, d_Lambda)`` array.

    ``kind`` only tags the call for active :func:`count_evaluations` counters.
    """
    L = np.atleast_2d(np.asarray(lams, dtype=float))
    if L.shape[1] != q.dim:
        raise ContractError(f"hyperparameter vectors have length {L.shape[1]}, expected {q.dim}")
    for counter in _COUNTERS:
        counter.points += L.shape[0]
        counter.by_kind[kind] = counter.by_kind.get(kind, 0) + L.shape[0]
    if q.center is not None:
        V = L - q.center
        vals = np.einsum("ki,ki->k", V @ q.A, V)
    else:
        vals = np.einsum("ki,ki->k", L @ q.A, L) + L @ q.b + q.c
    return _clamp(vals, q.c)


def evaluate(q: QuadraticObjective, lam) -> float:
    """``lam^T A lam + b^T lam + c``; tiny negative round-off is clamped to 0."""
    return float(evaluate_many(q, _as_lambda(lam, q.dim)[None, :])[0])


def _check_psd(q: QuadraticObjective) -> QuadraticObjective:
    if q.min_eigenvalue < -PSD_RTOL * q.norm:
        raise NumericalError(
            f"constructed A is not PSD: min eigenvalue {q.min_eigenvalue:.3e}, ||A|| = {q.norm:.3e}"
        )
    return q


def _gram(R: np.ndarray, r: np.ndarray):
    """A, b, c from per-sample feature stacks ``R`` (m, d_Lambda, d_theta) and residuals ``r`` (m, d_theta)."""
    m = R.shape[0]
    A = np.einsum("mkd,mld->kl", R, R) / m
    b = -2.0 * np.einsum("mkd,md->k", R, r) / m
    c = exact_mean(np.einsum("md,md->m", r, r))
    return 0.5 * (A + A.T), b, c


def _check_rows(samples: SampleSet, scores: PrecomputedScores, what: str) -> None:
    if scores.values.shape != (samples.m, samples.dim):
        raise ContractError(
            f"{what} has shape {scores.values.shape}, expected {(samples.m, samples.dim)}"
        )


def _prior_blocks(prior: ExpFamilyPrior, offset: int = 0) -> tuple:
    return tuple(
        (name, slice(sl.start + offset, sl.stop + offset)) for name, _coords, sl in prior.blocks
    )


def build_joint(samples: SampleSet, prior: ExpFamilyPrior, loss: LinearLoss, ref_scores: PrecomputedScores) -> QuadraticObjective:
    """Quadratic form in ``lambda = [lambda_L, lambda_pi]``.

    ``ref_scores`` are reference *posterior* scores at the sample rows.
    """
    if prior.d_theta != samples.dim or loss.d_theta != samples.dim:
        raise ContractError(
            f"prior (d_theta={prior.d_theta}) and loss (d_theta={loss.d_theta}) must match samples (d_theta={samples.dim})"
        )
    _check_rows(samples, ref_scores, "reference posterior scores")
    X = samples.draws
    R = np.concatenate([-loss.jacobian_many(X), prior.jacobian_many(X)], axis=1)
    r = ref_scores.values - prior.log_g_gradient_many(X)
    A, b, c = _gram(R, r)
    dL = loss.d_L
    blocks = (("loss", slice(0, dL)), ("prior", slice(dL, dL + prior.d_T))) + _prior_blocks(prior, dL)
    return _check_psd(QuadraticObjective(A, b, c, names=loss.names + prior.names, blocks=blocks))


def build_prior_only(samples: SampleSet, prior: ExpFamilyPrior, ref_prior_scores: PrecomputedScores) -> QuadraticObjective:
    """Quadratic form in ``lambda_pi`` with the loss held at its reference.

    ``ref_prior_scores`` are reference *prior* scores; the loss cancels.
    """
    if prior.d_theta != samples.dim:
        raise ContractError(f"prior has d_theta={prior.d_theta} but samples have {samples.dim}")
    _check_rows(samples, ref_prior_scores, "reference prior scores")
    X = samples.draws
    R = prior.jacobian_many(X)
    r = ref_prior_scores.values - prior.log_g_gradient_many(X)
    A, b, c = _gram(R, r)
    return _check_psd(QuadraticObjective(A, b, c, names=prior.names, blocks=_prior_blocks(prior)))


def build_prior_only_blocks(samples: SampleSet, prior: ExpFamilyPrior, ref_prior_scores: PrecomputedScores) -> list[tuple[str, QuadraticObjective]]:
    """One prior-only objective per factor of a product prior.

    Each factor objective only sees its own coordinates, so the block
    objectives add up to :func:`build_prior_only` except for the constant
    contributed by coordinates no factor owns.
    """
    if not prior.blocks:
        raise ContractError("prior has no factor blocks; build it with product_family")
    _check_rows(samples, ref_prior_scores, "reference prior scores")
    X = samples.draws
    Jall = prior.jacobian_many(X)
    r_all = ref_prior_scores.values - prior.log_g_gradient_many(X)
    out = []
    for name, coords, sl in prior.blocks:
        cols = list(coords)
        A, b, c = _gram(Jall[:, sl][:, :, cols], r_all[:, cols])
        out.append((name, _check_psd(QuadraticObjective(A, b, c, names=prior.names[sl]))))
    return out


def build_loss_only(samples: SampleSet, loss: LinearLoss, lambda_ref) -> QuadraticObjective:
    """Quadratic form in ``lambda_L`` with the prior held at its reference.

    Equals ``(lambda - lambda_ref)^T A_L (lambda - lambda_ref)`` with
    ``A_L = mean grad l grad l^T``.
    """
    if loss.d_theta != samples.dim:
        raise ContractError(f"loss has d_theta={loss.d_theta} but samples have {samples.dim}")
    lam_ref = _as_lambda(lambda_ref, loss.d_L)
    G = loss.jacobian_many(samples.draws)
    A = np.einsum("mkd,mld->kl", G, G) / samples.m
    A = 0.5 * (A + A.T)
    b = -2.0 * A @ lam_ref
    c = float(lam_ref @ A @ lam_ref)
    q = QuadraticObjective(A, b, c, names=loss.names, blocks=(("loss", slice(0, loss.d_L)),), center=lam_ref)
    return _check_psd(q)
