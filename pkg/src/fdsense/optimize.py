"""Neighbourhoods and the sup/inf problems behind global sensitivity.

The supremum of a convex quadratic over a bounded polytope is attained at a
vertex, so it is found by enumeration. The infimum uses the unconstrained
minimiser when it is feasible and projected gradient descent otherwise.
Non-convex scalar objectives use a dense grid followed by golden-section
refinement. Every routine is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._sum import exact_mean
from .errors import ContractError, EvaluationError
from .quadratic import QuadraticObjective, evaluate, evaluate_many

MAX_BOX_VERTEX_DIM = 20
PINV_RTOL = 1e-12
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class BoxNeighborhood:
    """Hyperrectangle ``lower <= lambda <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).ravel().copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).ravel().copy()
        if lo.shape != hi.shape:
            raise ContractError(f"lower has length {lo.size} but upper has length {hi.size}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ContractError("box bounds must be finite")
        if np.any(lo > hi):
            k = int(np.argmax(lo > hi))
            raise ContractError(f"box lower bound exceeds upper bound at index {k}: {lo[k]} > {hi[k]}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def around(cls, center, radius) -> "BoxNeighborhood":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return cls(center - radius, center + radius)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, lam, atol: float = 0.0) -> bool:
        lam = np.asarray(lam, dtype=float)
        return bool(np.all(lam >= self.lower - atol) and np.all(lam <= self.upper + atol))

    def project(self, lam) -> np.ndarray:
        return np.clip(lam, self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class PolytopeNeighborhood:
    """Convex hull of the rows of ``vertices`` (``K x d_Lambda``)."""

    vertices: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float)).copy()
        if V.shape[0] < 1:
            raise ContractError("polytope needs at least one vertex")
        if not np.all(np.isfinite(V)):
            raise ContractError("polytope vertices must be finite")
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]


@dataclass(eq=False)
class SensitivityResult:
    """Supremum, infimum and their difference over a neighbourhood.

    ``vertex_evaluations`` counts corner points evaluated for the supremum
    (summed over blocks for separable problems); ``per_block`` holds
    ``(block_id, SensitivityResult)`` pairs.
    """

    sup_value: float
    inf_value: float
    sup_arg: np.ndarray
    inf_arg: np.ndarray
    sensitivity: float
    per_block: Optional[list] = None
    iterations: int = 0
    converged: bool = True
    vertex_evaluations: int = 0
    names: tuple = field(default=())

    def block_shares(self) -> dict:
        """Fraction of the total sensitivity contributed by each block."""
        if not self.per_block:
            raise ContractError("result has no per-block breakdown")
        total = sum(r.sensitivity for _, r in self.per_block)
        if total <= 0:
            return {bid: 0.0 for bid, _ in self.per_block}
        return {bid: r.sensitivity / total for bid, r in self.per_block}


def _result(q, sup_arg, sup_value, inf_arg, inf_value, **kw) -> SensitivityResult:
    return SensitivityResult(
        sup_value=float(sup_value),
        inf_value=float(inf_value),
        sup_arg=np.asarray(sup_arg, dtype=float),
        inf_arg=np.asarray(inf_arg, dtype=float),
        sensitivity=float(sup_value - inf_value),
        names=tuple(q.names) if q is not None else (),
        **kw,
    )


# ---------------------------------------------------------------------------
# supremum
# ---------------------------------------------------------------------------

def sup_over_vertices(q: QuadraticObjective, p: PolytopeNeighborhood) -> tuple[np.ndarray, float]:
    """Vertex with the largest objective value; ties go to the lowest index."""
    if p.dim != q.dim:
        raise ContractError(f"vertices have dimension {p.dim}, objective has {q.dim}")
    vals = evaluate_many(q, p.vertices, kind="vertex")
    k = int(np.argmax(vals))
    return p.vertices[k].copy(), float(vals[k])


def box_vertices(b: BoxNeighborhood, limit: int = MAX_BOX_VERTEX_DIM) -> PolytopeNeighborhood:
    """All ``2^d`` corners in lexicographic order (first coordinate slowest, lower before upper)."""
    d = b.dim
    if d > limit:
        raise ContractError(
            f"box has d_Lambda={d} > {limit}: 2^{d} vertices is too many to enumerate; "
            "split the neighbourhood into independent blocks and use sensitivity_separable"
        )
    k = np.arange(2 ** d)[:, None]
    bits = (k >> np.arange(d - 1, -1, -1)) & 1
    return PolytopeNeighborhood(np.where(bits == 1, b.upper, b.lower))


# ---------------------------------------------------------------------------
# infimum
# ---------------------------------------------------------------------------

def unconstrained_min(q: QuadraticObjective, rtol: float = PINV_RTOL) -> np.ndarray:
    """Minimum-norm global minimiser ``-pinv(A) b / 2``.

    The pseudo-inverse discards eigenvalues below ``rtol * max eigenvalue``.
    """
    w, V = np.linalg.eigh(q.A)
    wmax = w[-1] if w.size else 0.0
    if wmax <= 0:
        return np.zeros(q.dim)
    keep = w > rtol * wmax
    coef = (V[:, keep].T @ q.b) / w[keep]
    return -0.5 * (V[:, keep] @ coef)


def is_stationary(q: QuadraticObjective, lam, rtol: float = 1e-9) -> bool:
    """Whether ``2 A lam + b`` vanishes relative to the size of its terms.

    A pseudo-inverse solution is a global minimiser only when ``b`` lies in
    the range of ``A``; otherwise the objective is unbounded along the null
    space and this check fails.
    """
    g = q.gradient(lam)
    scale = float(np.linalg.norm(q.b)) + 2.0 * q.norm * float(np.linalg.norm(lam))
    return float(np.linalg.norm(g)) <= rtol * max(scale, np.finfo(float).tiny)


def _polish_box(q: QuadraticObjective, b: BoxNeighborhood, lam: np.ndarray) -> np.ndarray:
    """Solve exactly on the free coordinates of the current active set."""
    free = (lam > b.lower) & (lam < b.upper)
    if not np.any(free):
        return lam
    fixed = ~free
    rhs = -(0.5 * q.b[free] + q.A[np.ix_(free, fixed)] @ lam[fixed])
    sol, *_ = np.linalg.lstsq(q.A[np.ix_(free, free)], rhs, rcond=None)
    cand = lam.copy()
    cand[free] = sol
    return cand


def _projected_step(q, b, lam, step):
    return b.project(lam - step * (2.0 * q.A @ lam + q.b))


def pgd_min_box(q: QuadraticObjective, b: BoxNeighborhood, max_iter: int = 10_000, tol: float = 1e-12):
    """Minimise ``q`` over a box.

    Returns ``(arg, value, iterations, converged)``. Uses the unconstrained
    minimiser if it lies in the box and is a stationary point; otherwise runs projected gradient
    descent from the box centre with step ``1/L``, ``L = 2 max eig(A)``
    (the Lipschitz constant of ``2 A lambda + b``), stopping once the step
    norm falls to ``tol``. The final iterate is refined by an exact solve on
    its free coordinates whenever that lowers the objective.
    """
    if max_iter < 1:
        raise ContractError(f"max_iter must be >= 1, got {max_iter}")
    if not tol > 0:
        raise ContractError(f"tol must be > 0, got {tol}")
    if b.dim != q.dim:
        raise ContractError(f"box has dimension {b.dim}, objective has {q.dim}")
    unc = unconstrained_min(q)
    if b.contains(unc) and is_stationary(q, unc):
        return unc, evaluate(q, unc), 0, True
    L = 2.0 * (float(np.linalg.eigvalsh(q.A)[-1]) if q.dim else 0.0)
    lam = b.center.copy()
    if L <= 0:
        # linear objective: each coordinate goes to the bound its slope favours
        lam = np.where(q.b > 0, b.lower, np.where(q.b < 0, b.upper, lam))
        return lam, evaluate(q, lam), 0, True
    step = 1.0 / L
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = _projected_step(q, b, lam, step)
        moved = float(np.linalg.norm(new - lam))
        lam = new
        if moved <= tol:
            converged = True
            break
    value = evaluate(q, lam)
    cand = _polish_box(q, b, lam)
    if b.contains(cand):
        cval = evaluate(q, cand)
        if cval <= value:
            lam, value = cand, cval
    if not converged:
        # the polish may land on the fixed point even when the loop did not
        moved = float(np.linalg.norm(_projected_step(q, b, lam, step) - lam))
        converged = moved <= tol * max(1.0, float(np.linalg.norm(lam)))
    return lam, value, it, converged


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def in_polytope(p: PolytopeNeighborhood, lam, atol: float = 1e-10) -> bool:
    """Whether ``lam`` is a convex combination of the vertices (LP feasibility)."""
    from scipy.optimize import linprog

    lam = np.asarray(lam, dtype=float).ravel()
    V = p.vertices
    K = V.shape[0]
    A_eq = np.vstack([V.T, np.ones((1, K))])
    b_eq = np.concatenate([lam, [1.0]])
    res = linprog(np.zeros(K), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * K, method="highs")
    if res.status != 0:
        return False
    return bool(np.linalg.norm(V.T @ res.x - lam) <= atol * (1.0 + np.linalg.norm(lam)))


def pgd_min_polytope(q: QuadraticObjective, p: PolytopeNeighborhood, max_iter: int = 50_000, tol: float = 1e-13):
    """Minimise ``q`` over a vertex-described polytope.

    Returns the unconstrained minimiser when it lies in the polytope.
    Otherwise works in convex-combination weights ``gamma``
    (``lambda = V^T gamma``), projecting onto the probability simplex at
    each step, until a step moves ``gamma`` by at most ``tol``. Returns
    ``(arg, value, iterations, converged)``.
    """
    if p.dim != q.dim:
        raise ContractError(f"vertices have dimension {p.dim}, objective has {q.dim}")
    unc = unconstrained_min(q)
    if is_stationary(q, unc) and in_polytope(p, unc):
        return unc, evaluate(q, unc), 0, True
    V = p.vertices
    K = V.shape[0]
    Ag = V @ q.A @ V.T
    Ag = 0.5 * (Ag + Ag.T)
    bg = V @ q.b
    L = 2.0 * float(np.linalg.eigvalsh(Ag)[-1])
    gamma = np.full(K, 1.0 / K)
    it, converged = 0, True
    if L > 0 and K > 1:
        converged = False
        step = 1.0 / L
        for it in range(1, max_iter + 1):
            new = _project_simplex(gamma - step * (2.0 * Ag @ gamma + bg))
            moved = float(np.linalg.norm(new - gamma))
            gamma = new
            if moved <= tol:
                converged = True
                break
    lam = V.T @ gamma
    return lam, evaluate(q, lam), it, converged


# ---------------------------------------------------------------------------
# global sensitivity
# ---------------------------------------------------------------------------

def sensitivity_box(q: QuadraticObjective, b: BoxNeighborhood, max_iter: int = 10_000, tol: float = 1e-12) -> SensitivityResult:
    """Supremum minus infimum of ``q`` over a box."""
    verts = box_vertices(b)
    sup_arg, sup_value = sup_over_vertices(q, verts)
    inf_arg, inf_value, iters, conv = pgd_min_box(q, b, max_iter=max_iter, tol=tol)
    return _result(q, sup_arg, sup_value, inf_arg, inf_value, iterations=iters, converged=conv,
                   vertex_evaluations=verts.vertices.shape[0])


def sensitivity_polytope(q: QuadraticObjective, p: PolytopeNeighborhood, max_iter: int = 50_000, tol: float = 1e-13) -> SensitivityResult:
    """Supremum minus infimum of ``q`` over a vertex-described polytope."""
    sup_arg, sup_value = sup_over_vertices(q, p)
    inf_arg, inf_value, iters, conv = pgd_min_polytope(q, p, max_iter=max_iter, tol=tol)
    return _result(q, sup_arg, sup_value, inf_arg, inf_value, iterations=iters, converged=conv,
                   vertex_evaluations=p.vertices.shape[0])


def sensitivity_separable(blocks: Sequence, max_iter: int = 10_000, tol: float = 1e-12) -> SensitivityResult:
    """Sum of per-block box sensitivities for independent hyperparameter blocks.

    ``blocks`` holds ``(objective, box)`` or ``(block_id, objective, box)``
    tuples. The caller guarantees the blocks share no hyperparameters and
    that the joint objective is block diagonal.
    """
    if not blocks:
        raise ContractError("sensitivity_separable needs at least one block")
    per_block = []
    for k, blk in enumerate(blocks):
        if len(blk) == 2:
            bid, (q, box) = k, blk
        else:
            bid, q, box = blk
        per_block.append((bid, sensitivity_box(q, box, max_iter=max_iter, tol=tol)))
    results = [r for _, r in per_block]
    names = tuple(n for bid, r in per_block for n in r.names)
    sup_value = sum(r.sup_value for r in results)
    inf_value = sum(r.inf_value for r in results)
    return SensitivityResult(
        sup_value=sup_value,
        inf_value=inf_value,
        sup_arg=np.concatenate([r.sup_arg for r in results]),
        inf_arg=np.concatenate([r.inf_arg for r in results]),
        sensitivity=sum(r.sensitivity for r in results),
        per_block=per_block,
        iterations=max(r.iterations for r in results),
        converged=all(r.converged for r in results),
        vertex_evaluations=sum(r.vertex_evaluations for r in results),
        names=names,
    )


def _golden(f: Callable[[float], float], a: float, b: float, width: float, maximise: bool) -> tuple[float, float]:
    sign = -1.0 if maximise else 1.0
    g = lambda x: sign * f(x)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = g(c), g(d)
    best_x, best_v = (c, fc) if fc <= fd else (d, fd)
    while b - a > width:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = g(d)
        for x, v in ((c, fc), (d, fd)):
            if v < best_v:
                best_x, best_v = x, v
    return best_x, sign * best_v


def sensitivity_scalar_search(f: Callable[[float], float], interval, grid_n: int = 512) -> SensitivityResult:
    """Global sup/inf of a scalar function on ``[lo, hi]`` by grid + golden section.

    The best and worst grid cells are refined until the bracket is narrower
    than ``1e-10 (hi - lo)``; refined points only replace grid values when
    they improve on them.
    """
    lo, hi = (float(v) for v in interval)
    if grid_n < 3:
        raise ContractError(f"grid_n must be >= 3, got {grid_n}")
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ContractError(f"invalid interval [{lo}, {hi}]")
    xs = np.linspace(lo, hi, grid_n)
    vals = np.empty(grid_n)
    for k, x in enumerate(xs):
        v = float(f(float(x)))
        if not np.isfinite(v):
            raise EvaluationError(f"objective is non-finite at lambda={x!r}")
        vals[k] = v
    width = 1e-10 * (hi - lo)
    out = {}
    for maximise in (True, False):
        k = int(np.argmax(vals) if maximise else np.argmin(vals))
        x_best, v_best = float(xs[k]), float(vals[k])
        if hi > lo:
            a, b = float(xs[max(k - 1, 0)]), float(xs[min(k + 1, grid_n - 1)])
            xr, vr = _golden(f, a, b, width, maximise)
            if (vr > v_best) if maximise else (vr < v_best):
                x_best, v_best = xr, vr
        out[maximise] = (x_best, v_best)
    (sx, sv), (ix, iv) = out[True], out[False]
    return SensitivityResult(
        sup_value=sv, inf_value=iv, sup_arg=np.array([sx]), inf_arg=np.array([ix]),
        sensitivity=sv - iv, iterations=grid_n, converged=True, names=("lambda",),
    )


def learning_rate_sensitivity(grad_l_norms_sq, eps: float) -> float:
    """``eps^2 * mean ||grad l||^2``: box sensitivity of a learning rate.

    Exact for the neighbourhood ``|lambda_L - lambda_ref| <= eps`` when the
    reference learning rate lies in it and only the loss is perturbed.
    """
    if not eps >= 0:
        raise ContractError(f"eps must be non-negative, got {eps}")
    return float(eps * eps * exact_mean(grad_l_norms_sq))
