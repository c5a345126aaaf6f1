"""Empirical Fisher divergence from reference-posterior samples.

All reductions over samples go through :func:`math.fsum`, so every value
here is independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._sum import exact_mean, exact_sum
from .errors import ContractError
from .scores import PrecomputedScores

CROSS_CONVENTIONS = ("with_factor_2", "paper_literal")


@dataclass(frozen=True, eq=False)
class FdEstimate:
    """Monte Carlo Fisher divergence ``(1/m) sum_i Delta_i``.

    ``per_sample[i] = ||s_ref(theta_i) - s_cand(theta_i)||^2``.
    """

    value: float
    m: int
    per_sample: Optional[np.ndarray] = None


@dataclass(frozen=True)
class FdDecomposition:
    """Loss / prior / interaction split of the empirical Fisher divergence.

    With ``dL = grad L_ref - grad L`` and ``dp = s_pi_ref - s_pi`` the score
    difference of the posteriors is ``dp - dL``, hence

    ``FD = mean ||dL||^2 + mean ||dp||^2 - 2 mean dL.dp``.

    ``cross_term`` follows ``cross_convention``: ``"with_factor_2"`` is the
    ``-2 mean dL.dp`` term above (the three terms then add up to the
    total), ``"paper_literal"`` is ``+mean dL.dp``. Both are always kept.
    """

    loss_term: float
    prior_term: float
    cross_term: float
    cross_convention: str
    cross_with_factor_2: float
    cross_paper_literal: float
    total: float

    def reconstruction_error(self) -> float:
        return self.loss_term + self.prior_term + self.cross_with_factor_2 - self.total


def _aligned(*mats: PrecomputedScores) -> list[np.ndarray]:
    shape = mats[0].values.shape
    for k, s in enumerate(mats[1:], start=1):
        if s.values.shape != shape:
            raise ContractError(
                f"score matrix {k} ({s.label or 'unnamed'}) has shape {s.values.shape}, expected {shape}"
            )
    return [s.values for s in mats]


def estimate_fd(ref_scores: PrecomputedScores, cand_scores: PrecomputedScores, keep_per_sample: bool = True) -> FdEstimate:
    """Empirical Fisher divergence between reference and candidate posterior scores."""
    ref, cand = _aligned(ref_scores, cand_scores)
    diff = ref - cand
    delta = np.einsum("ij,ij->i", diff, diff)
    return FdEstimate(exact_mean(delta), ref.shape[0], delta if keep_per_sample else None)


def decompose_fd(
    ref_loss_grads: PrecomputedScores,
    cand_loss_grads: PrecomputedScores,
    ref_prior_scores: PrecomputedScores,
    cand_prior_scores: PrecomputedScores,
    cross_convention: str = "with_factor_2",
) -> FdDecomposition:
    if cross_convention not in CROSS_CONVENTIONS:
        raise ContractError(f"cross_convention must be one of {CROSS_CONVENTIONS}, got {cross_convention!r}")
    gl_ref, gl, sp_ref, sp = _aligned(ref_loss_grads, cand_loss_grads, ref_prior_scores, cand_prior_scores)
    dL = gl_ref - gl
    dp = sp_ref - sp
    inner = np.einsum("ij,ij->i", dL, dp)
    total_diff = dp - dL
    loss_term = exact_mean(np.einsum("ij,ij->i", dL, dL))
    prior_term = exact_mean(np.einsum("ij,ij->i", dp, dp))
    mean_inner = exact_mean(inner)
    cross2 = -2.0 * mean_inner
    return FdDecomposition(
        loss_term=loss_term,
        prior_term=prior_term,
        cross_term=cross2 if cross_convention == "with_factor_2" else mean_inner,
        cross_convention=cross_convention,
        cross_with_factor_2=cross2,
        cross_paper_literal=mean_inner,
        total=exact_mean(np.einsum("ij,ij->i", total_diff, total_diff)),
    )


def _check_partition(blocks: Sequence[Sequence[int]], d: int) -> list[list[int]]:
    out = [sorted(int(k) for k in b) for b in blocks]
    flat = [k for b in out for k in b]
    if any(len(b) == 0 for b in out):
        raise ContractError("empty block in dimension partition")
    if sorted(flat) != list(range(d)):
        dup = sorted({k for k in flat if flat.count(k) > 1})
        missing = sorted(set(range(d)) - set(flat))
        extra = sorted(set(flat) - set(range(d)))
        raise ContractError(f"blocks must partition 0..{d - 1}: duplicated {dup}, missing {missing}, out of range {extra}")
    return out


def per_dimension_fd(ref_scores: PrecomputedScores, cand_scores: PrecomputedScores, blocks: Sequence[Sequence[int]]) -> np.ndarray:
    """Contribution of each coordinate block to the empirical Fisher divergence.

    Contributions add up to :func:`estimate_fd` up to the final rounding of
    each correctly rounded block sum.
    """
    ref, cand = _aligned(ref_scores, cand_scores)
    parts = _check_partition(blocks, ref.shape[1])
    sq = (ref - cand) ** 2
    m = ref.shape[0]
    return np.array([exact_sum(sq[:, b]) / m for b in parts])


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's adaptive window.

    Returns 1.0 for constant or very short series.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4:
        return 1.0
    y = x - x.mean()
    var = np.dot(y, y) / n
    if var <= 0:
        return 1.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n] / n
    rho = acov / acov[0]
    taus = 2.0 * np.cumsum(rho) - 1.0
    window = np.arange(n) < c * taus
    M = int(np.argmin(window)) if not np.all(window) else n - 1
    return float(max(taus[M], 1.0))


def chebyshev_error_bound(
    per_sample,
    delta: float,
    origin: str = "iid",
    chain_ids=None,
) -> float:
    """Heuristic Chebyshev-type error radius ``sqrt(C)/(sqrt(m) delta)``.

    ``C`` is a plug-in for the asymptotic variance of the per-sample terms:
    their sample variance (``ddof=1``), multiplied for MCMC draws by the
    integrated autocorrelation time (averaged over chains, weighted by
    length). This is a diagnostic, not a certified constant.
    """
    if not (0.0 < delta < 1.0):
        raise ContractError(f"delta must lie in (0, 1), got {delta}")
    d = np.asarray(per_sample, dtype=float).ravel()
    m = d.size
    if m == 0:
        raise ContractError("per-sample values are empty")
    if m == 1:
        return 0.0
    mean = exact_mean(d)
    var = exact_sum((d - mean) ** 2) / (m - 1)
    tau = 1.0
    if origin == "mcmc":
        if chain_ids is None:
            tau = integrated_autocorr_time(d)
        else:
            ids = np.asarray(chain_ids).ravel()
            if ids.size != m:
                raise ContractError(f"chain_ids has length {ids.size}, expected {m}")
            taus, weights = [], []
            for cid in np.unique(ids):
                seg = d[ids == cid]
                taus.append(integrated_autocorr_time(seg))
                weights.append(seg.size)
            tau = float(np.dot(taus, weights) / m)
    elif origin != "iid":
        raise ContractError(f"origin must be 'iid' or 'mcmc', got {origin!r}")
    return float(np.sqrt(var * tau) / (np.sqrt(m) * delta))
