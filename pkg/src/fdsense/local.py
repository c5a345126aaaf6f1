"""Directional (local) sensitivity of the empirical Fisher divergence."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._sum import exact_mean
from .errors import ContractError
from .scores import ExpFamilyPrior, PrecomputedScores, SampleSet, as_point


@dataclass(frozen=True, eq=False)
class ScoreJacobianField:
    """``theta -> d s_pi(theta | lambda) / d lambda`` as a ``d_theta x d_Lambda`` matrix."""

    d_theta: int
    d_lambda: int
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    batch_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, theta) -> np.ndarray:
        x = as_point(theta, self.d_theta)
        if self.fn is None:
            return self.many(x[None, :])[0]
        return np.asarray(self.fn(x), dtype=float).reshape(self.d_theta, self.d_lambda)

    def many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.batch_fn is not None:
            out = np.asarray(self.batch_fn(X), dtype=float)
        else:
            out = np.stack([self(r) for r in X])
        if out.shape != (X.shape[0], self.d_theta, self.d_lambda):
            raise ContractError(f"score Jacobians have shape {out.shape}, expected {(X.shape[0], self.d_theta, self.d_lambda)}")
        return out

    @classmethod
    def from_expfam(cls, prior: ExpFamilyPrior) -> "ScoreJacobianField":
        """For natural exponential families the score is linear in lambda: Jacobian ``grad T^T``."""
        return cls(prior.d_theta, prior.d_T,
                   batch_fn=lambda X: np.transpose(prior.jacobian_many(X), (0, 2, 1)))


def directional_derivative(
    samples: SampleSet,
    ref_scores: PrecomputedScores,
    cand_scores: PrecomputedScores,
    jac: ScoreJacobianField,
    v,
) -> float:
    """Derivative of the empirical FD at the candidate along a unit direction ``v``.

    ``-(2/m) sum_i (s_ref(theta_i) - s_cand(theta_i))^T J(theta_i) v``, with
    ``J`` the Jacobian of the prior score in the hyperparameters evaluated
    at the candidate.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    if v.size != jac.d_lambda:
        raise ContractError(f"direction has length {v.size}, expected {jac.d_lambda}")
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ContractError(f"direction must have unit norm, got ||v|| = {np.linalg.norm(v)!r}")
    shape = (samples.m, samples.dim)
    for what, s in (("reference scores", ref_scores), ("candidate scores", cand_scores)):
        if s.values.shape != shape:
            raise ContractError(f"{what} have shape {s.values.shape}, expected {shape}")
    sdot = jac.many(samples.draws) @ v
    terms = np.einsum("md,md->m", ref_scores.values - cand_scores.values, sdot)
    return -2.0 * exact_mean(terms)
