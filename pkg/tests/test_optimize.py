import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

import fdsense as fs
from fdsense.errors import ContractError, EvaluationError
from fdsense.optimize import in_polytope, unconstrained_min
from oracles import STUDY_VERTICES, gaussian_study, random_psd, random_quadratic


def _q1(a, b, c):
    return fs.QuadraticObjective([[a]], [b], c)


# --- supremum -------------------------------------------------------------

def test_sup_scalar():
    arg, val = fs.sup_over_vertices(_q1(1, 0, 0), fs.PolytopeNeighborhood([[1.0], [2.0]]))
    assert arg.tolist() == [2.0] and val == 4.0


def test_sup_ties_go_to_lowest_index():
    arg, _ = fs.sup_over_vertices(_q1(1, 0, 0), fs.PolytopeNeighborhood([[-1.0], [1.0]]))
    assert arg.tolist() == [-1.0]


def test_sup_study_picks_first_vertex():
    samples, prior, ref_prior, _ = gaussian_study(0)
    q = fs.build_prior_only(samples, prior, ref_prior)
    arg, _ = fs.sup_over_vertices(q, fs.PolytopeNeighborhood(STUDY_VERTICES))
    assert arg.tolist() == [-2.5, -0.125]
    mu, cov = fs.gaussian_moment_from_natural(arg[:1], arg[1:].reshape(1, 1))
    assert (mu[0], np.sqrt(cov[0, 0])) == (-10.0, 2.0)


def test_sup_box_matches_brute_force_and_interior_grid(rng):
    q = random_quadratic(rng, 3)
    box = fs.BoxNeighborhood([-1.0, 0.0, 2.0], [1.0, 0.5, 3.0])
    arg, val = fs.sup_over_vertices(q, fs.box_vertices(box))
    corners = list(itertools.product(*zip(box.lower, box.upper)))
    brute = max(fs.evaluate(q, c) for c in corners)
    assert val == brute
    g = [np.linspace(lo, hi, 50) for lo, hi in zip(box.lower, box.upper)]
    grid = np.stack(np.meshgrid(*g, indexing="ij"), axis=-1).reshape(-1, 3)
    assert np.max(fs.evaluate_many(q, grid)) <= val + 1e-10


def test_empty_polytope_rejected():
    with pytest.raises(ContractError):
        fs.PolytopeNeighborhood(np.zeros((0, 2)))


# --- box vertices ---------------------------------------------------------

def test_box_vertices_small():
    assert fs.box_vertices(fs.BoxNeighborhood([0.0], [1.0])).vertices.tolist() == [[0.0], [1.0]]
    v = fs.box_vertices(fs.BoxNeighborhood([0.0, 0.0], [1.0, 1.0])).vertices
    assert v.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


def test_box_vertices_fourteen_dims():
    v = fs.box_vertices(fs.BoxNeighborhood(np.zeros(14), np.ones(14))).vertices
    assert v.shape == (16384, 14)
    assert len({tuple(r) for r in v}) == 16384


def test_box_vertices_refuses_large_boxes():
    with pytest.raises(ContractError, match="sensitivity_separable"):
        fs.box_vertices(fs.BoxNeighborhood(np.zeros(21), np.ones(21)))


def test_box_validation():
    with pytest.raises(ContractError):
        fs.BoxNeighborhood([1.0], [0.0])
    with pytest.raises(ContractError):
        fs.BoxNeighborhood([np.nan], [0.0])


# --- infimum --------------------------------------------------------------

def test_unconstrained_min_identity():
    q = fs.QuadraticObjective(np.eye(2), [-2.0, 0.0], 0.0)
    np.testing.assert_allclose(unconstrained_min(q), [1.0, 0.0], atol=1e-15)


def test_unconstrained_min_rank_deficient_is_minimum_norm():
    q = fs.QuadraticObjective(np.diag([1.0, 0.0]), [-2.0, 0.0], 0.0)
    lam = unconstrained_min(q)
    np.testing.assert_allclose(lam, [1.0, 0.0], atol=1e-15)
    # the objective is flat along the second coordinate
    vals = [fs.evaluate(q, [1.0, t]) for t in np.linspace(-10, 10, 41)]
    assert max(vals) == min(vals) == fs.evaluate(q, lam)


def test_unconstrained_min_of_loss_only_is_reference(rng):
    samples = fs.SampleSet(rng.normal(size=(40, 2)))
    loss = fs.LinearLoss.from_values(rng.normal(size=(40, 2, 2)), [0.7, 1.3])
    q = fs.build_loss_only(samples, loss, [0.7, 1.3])
    np.testing.assert_allclose(unconstrained_min(q), [0.7, 1.3], atol=1e-10)


def test_pgd_box_endpoint():
    arg, val, _, conv = fs.pgd_min_box(_q1(1, -10, 25), fs.BoxNeighborhood([0.0], [1.0]))
    assert arg.tolist() == [1.0] and val == 16.0 and conv


def test_pgd_box_interior_shortcut():
    arg, val, it, conv = fs.pgd_min_box(_q1(1, -1, 0.25), fs.BoxNeighborhood([0.0], [1.0]))
    assert arg.tolist() == [0.5] and val == 0.0 and it == 0 and conv


def test_pgd_box_argument_checks():
    q, b = _q1(1, 0, 0), fs.BoxNeighborhood([0.0], [1.0])
    with pytest.raises(ContractError):
        fs.pgd_min_box(q, b, max_iter=0)
    with pytest.raises(ContractError):
        fs.pgd_min_box(q, b, tol=0.0)


def _active_set_oracle(q, box):
    """Exact box-QP minimum by enumerating which coordinates sit at which bound."""
    d = q.dim
    best = np.inf
    for pattern in itertools.product((0, 1, 2), repeat=d):
        lam = np.zeros(d)
        free = [k for k in range(d) if pattern[k] == 2]
        for k in range(d):
            if pattern[k] == 0:
                lam[k] = box.lower[k]
            elif pattern[k] == 1:
                lam[k] = box.upper[k]
        if free:
            fixed = [k for k in range(d) if k not in free]
            A_ff = q.A[np.ix_(free, free)]
            rhs = -0.5 * q.b[free] - q.A[np.ix_(free, fixed)] @ lam[fixed]
            lam[free] = np.linalg.lstsq(A_ff, rhs, rcond=None)[0]
            if np.any(lam[free] < box.lower[free] - 1e-12) or np.any(lam[free] > box.upper[free] + 1e-12):
                continue
        best = min(best, float(lam @ q.A @ lam + q.b @ lam + q.c))
    return best


@pytest.mark.parametrize("seed", range(8))
def test_pgd_box_matches_active_set_enumeration(seed):
    rng = np.random.default_rng(seed)
    q = fs.QuadraticObjective(random_psd(rng, 5, rank=int(rng.integers(2, 6))), rng.normal(size=5) * 4, 3.0)
    box = fs.BoxNeighborhood(-rng.uniform(0.2, 1, 5), rng.uniform(0.2, 1, 5))
    arg, val, _, conv = fs.pgd_min_box(q, box)
    assert conv and box.contains(arg, atol=1e-12)
    assert abs(val - _active_set_oracle(q, box)) <= 1e-8
    rand = rng.uniform(box.lower, box.upper, size=(100_000, 5))
    assert val <= np.min(fs.evaluate_many(q, rand)) + 1e-12


@given(st.integers(0, 2 ** 32 - 1))
def test_pgd_box_not_above_vertices_or_random_points(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    q = random_quadratic(rng, d, rank=int(rng.integers(1, d + 1)))
    lo = rng.normal(size=d)
    box = fs.BoxNeighborhood(lo, lo + rng.uniform(0, 2, d))
    _, val, _, _ = fs.pgd_min_box(q, box)
    pts = np.vstack([fs.box_vertices(box).vertices, rng.uniform(box.lower, box.upper, size=(1000, d))])
    assert val <= np.min(fs.evaluate_many(q, pts)) + 1e-10


def test_pgd_polytope_matches_scipy(rng):
    for _ in range(5):
        q = random_quadratic(rng, 2)
        V = rng.normal(size=(5, 2)) * 2
        lam, val, _, conv = fs.pgd_min_polytope(q, fs.PolytopeNeighborhood(V))
        cons = ({"type": "eq", "fun": lambda g: g.sum() - 1},)
        res = minimize(lambda g: fs.evaluate(q, V.T @ g), np.full(5, 0.2), bounds=[(0, 1)] * 5,
                       constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        assert val <= res.fun + 1e-7
        assert in_polytope(fs.PolytopeNeighborhood(V), lam, atol=1e-8)


def test_in_polytope():
    P = fs.PolytopeNeighborhood([[0, 0], [1, 0], [0, 1]])
    assert in_polytope(P, [0.2, 0.2])
    assert not in_polytope(P, [0.8, 0.8])


# --- sensitivity ------------------------------------------------------------

def test_sensitivity_box_loss_only():
    samples = fs.SampleSet(np.zeros((10, 1)))
    loss = fs.LinearLoss.from_values(np.full((10, 1, 1), 2.0), [1.0])
    q = fs.build_loss_only(samples, loss, [1.0])
    r = fs.sensitivity_box(q, fs.BoxNeighborhood([0.95], [1.05]))
    assert r.sup_value == pytest.approx(0.01, rel=1e-13)
    assert r.inf_value == 0.0 and r.inf_arg.tolist() == [1.0]
    assert r.sensitivity == pytest.approx(0.01, rel=1e-13)
    assert r.vertex_evaluations == 2


def test_sensitivity_box_prior_reference_inside_gives_zero_infimum():
    samples, prior, ref_prior, _ = gaussian_study(4)
    q = fs.build_prior_only(samples, prior, ref_prior)
    r = fs.sensitivity_box(q, fs.BoxNeighborhood.around(prior.lambda_pi, [1.0, 0.01]))
    assert r.inf_value == pytest.approx(0.0, abs=1e-12)
    assert r.sensitivity == pytest.approx(r.sup_value, abs=1e-12)


def test_degenerate_box_has_zero_sensitivity(rng):
    q = random_quadratic(rng, 2)
    r = fs.sensitivity_box(q, fs.BoxNeighborhood([0.3, 0.4], [0.3, 0.4]))
    assert r.sensitivity == 0.0


def test_sensitivity_polytope_study():
    samples, prior, ref_prior, _ = gaussian_study(5)
    q = fs.build_prior_only(samples, prior, ref_prior)
    r = fs.sensitivity_polytope(q, fs.PolytopeNeighborhood(STUDY_VERTICES))
    assert r.sup_arg.tolist() == [-2.5, -0.125]
    assert r.inf_value == pytest.approx(0.0, abs=1e-12) and r.converged


def test_separable_single_block_equals_box(rng):
    q = random_quadratic(rng, 3)
    box = fs.BoxNeighborhood([-1, -1, -1], [1, 1, 1])
    a = fs.sensitivity_box(q, box)
    b = fs.sensitivity_separable([(q, box)])
    assert (a.sup_value, a.inf_value, a.sensitivity) == (b.sup_value, b.inf_value, b.sensitivity)


def test_separable_matches_joint_block_diagonal(rng):
    qs, boxes = [], []
    for _ in range(4):
        qs.append(random_quadratic(rng, 2))
        boxes.append(fs.BoxNeighborhood([-1.0, -2.0], [1.5, 0.5]))
    from scipy.linalg import block_diag

    joint = fs.QuadraticObjective(block_diag(*[q.A for q in qs]), np.concatenate([q.b for q in qs]), sum(q.c for q in qs))
    jbox = fs.BoxNeighborhood(np.concatenate([b.lower for b in boxes]), np.concatenate([b.upper for b in boxes]))
    sep = fs.sensitivity_separable([(f"b{k}", q, b) for k, (q, b) in enumerate(zip(qs, boxes))])
    full = fs.sensitivity_box(joint, jbox)
    assert abs(sep.sensitivity - full.sensitivity) <= 1e-10 * (1 + full.sensitivity)
    assert sep.vertex_evaluations == 16 and full.vertex_evaluations == 256
    assert sum(sep.block_shares().values()) == pytest.approx(1.0, abs=1e-12)


def test_separable_needs_blocks():
    with pytest.raises(ContractError):
        fs.sensitivity_separable([])


def test_scalar_search_parabola():
    r = fs.sensitivity_scalar_search(lambda x: x * x, (-1.0, 2.0))
    assert r.sup_value == 4.0 and r.sup_arg.tolist() == [2.0]
    assert r.inf_value == pytest.approx(0.0, abs=1e-18) and abs(r.inf_arg[0]) <= 1e-9
    assert r.sensitivity == pytest.approx(4.0)


def test_scalar_search_finds_narrow_interior_peak():
    f = lambda x: np.exp(-((x - 0.3137) / 0.004) ** 2)
    r = fs.sensitivity_scalar_search(f, (0.0, 1.0), grid_n=512)
    assert r.sup_arg[0] == pytest.approx(0.3137, abs=1e-8)
    assert r.sup_value == pytest.approx(1.0, abs=1e-14)


def test_copula_objective_reference_is_zero(rng):
    f = fs.copula_fd_objective(fs.SampleSet(rng.uniform(0.05, 0.95, size=(100, 2))), (0, 1))
    assert f(0.0) == 0.0


def test_scalar_search_reports_bad_abscissa():
    with pytest.raises(EvaluationError, match="lambda="):
        fs.sensitivity_scalar_search(lambda x: np.inf if x > 0.5 else x, (0.0, 1.0), grid_n=5)


def test_scalar_search_is_deterministic():
    f = lambda x: np.sin(13 * x) + 0.1 * x
    a = fs.sensitivity_scalar_search(f, (-2, 2))
    b = fs.sensitivity_scalar_search(f, (-2, 2))
    assert (a.sup_arg.tolist(), a.sup_value, a.inf_arg.tolist(), a.inf_value) == (b.sup_arg.tolist(), b.sup_value, b.inf_arg.tolist(), b.inf_value)


def test_learning_rate_examples():
    assert fs.learning_rate_sensitivity(np.full(10, 4.0), 0.0) == 0.0
    assert fs.learning_rate_sensitivity(np.full(10, 4.0), 0.05) == pytest.approx(0.01, rel=1e-15)
    with pytest.raises(ContractError):
        fs.learning_rate_sensitivity(np.ones(3), -0.1)


@given(st.floats(0, 10), st.integers(0, 2 ** 32 - 1))
def test_learning_rate_is_exactly_quadratic(eps, seed):
    norms = np.random.default_rng(seed).exponential(size=50)
    assert fs.learning_rate_sensitivity(norms, 2 * eps) == 4 * fs.learning_rate_sensitivity(norms, eps)


@given(st.integers(0, 2 ** 32 - 1))
def test_sensitivity_invariants(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 5))
    q = random_quadratic(rng, d, rank=int(rng.integers(1, d + 1)))
    lo = rng.normal(size=d)
    box = fs.BoxNeighborhood(lo, lo + rng.uniform(0, 3, d))
    r = fs.sensitivity_box(q, box)
    assert r.sensitivity >= -1e-10 and r.sup_value >= r.inf_value
    assert box.contains(r.sup_arg, atol=1e-12) and box.contains(r.inf_arg, atol=1e-12)
    pts = rng.uniform(box.lower, box.upper, size=(500, d))
    assert np.max(fs.evaluate_many(q, pts)) <= r.sup_value + 1e-10
    again = fs.sensitivity_box(q, box)
    assert again.inf_arg.tobytes() == r.inf_arg.tobytes() and again.sup_value == r.sup_value
