"""End-to-end runs: config in, :class:`SensitivityReport` out.

Each stage runs under the config key that drives it, so any library error
reaches the user prefixed with that key.
"""

from __future__ import annotations

import contextlib
import hashlib
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigError, ContractError, DomainError, FdSenseError
from .estimation import chebyshev_error_bound, decompose_fd, estimate_fd, per_dimension_fd
from .gaussian import conjugate_posterior_from_natural, fd_gaussian, kl_gaussian, w2_gaussian
from .io import load_samples, load_score_matrix, sample_columns
from .local import ScoreJacobianField, directional_derivative
from .optimize import (
    BoxNeighborhood,
    PolytopeNeighborhood,
    learning_rate_sensitivity,
    sensitivity_box,
    sensitivity_polytope,
    sensitivity_scalar_search,
    sensitivity_separable,
)
from .quadratic import build_joint, build_loss_only, build_prior_only, build_prior_only_blocks, evaluate, evaluate_many
from .report import SensitivityReport, plain, result_dict
from .scores import (
    GaussianCopulaScore,
    LinearLoss,
    PrecomputedScores,
    SampleSet,
    copula_fd_objective,
    copula_score_many,
    gaussian_family,
    gaussian_moment_from_natural,
    gaussian_natural_from_moment,
    invgamma_family,
    product_family,
    split_gaussian_natural,
)

# the worst-case study on a scalar Gaussian location model
DEMO_DEFAULTS = {
    "n": 100,
    "theta_true": 3.0,
    "sigma_l": 2.0,
    "mu_ref": 2.0,
    "sigma_ref": 4.0,
    "m": 2000,
    "vertices": [[-2.5, -0.125], [-0.4, -0.02], [2.5, -0.125], [0.4, 0.02]],
    "mu_grid": list(np.linspace(-10.0, 10.0, 81)),
    "sigma_grid": [2.0, 3.0, 4.0, 5.0],
}


@contextlib.contextmanager
def stage(key: str):
    """Re-raise library errors with ``key`` prefixed, keeping their type."""
    try:
        yield
    except FdSenseError as exc:
        msg = str(exc)
        if msg.startswith(f"{key}:"):
            raise
        raise type(exc)(f"{key}: {msg}") from exc


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class _Inputs:
    """Loads files for a run and records their digests."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.files: dict = {}
        self.samples = None
        self.columns: list = []

    def _record(self, key: str, path: Path) -> None:
        self.files[key] = {"path": self.cfg.display_path(path), "sha256": _sha256(path)}

    def load_samples(self):
        with stage("samples.path"):
            self.samples = load_samples(self.cfg.samples_path, origin=self.cfg.origin)
            self.columns = sample_columns(self.cfg.samples_path)
        self._record("samples", self.cfg.samples_path)
        return self.samples

    def scores(self, name: str) -> PrecomputedScores:
        path = self.cfg.scores_paths[name]
        with stage(f"scores.{name}"):
            s = load_score_matrix(path, self.samples.m, self.samples.dim, label=name)
        self._record(f"scores.{name}", path)
        return s

    def loss_grads(self) -> list:
        out = []
        for k, path in enumerate(self.cfg.scores_paths["loss_grad"]):
            with stage(f"scores.loss_grad[{k}]"):
                out.append(load_score_matrix(path, self.samples.m, self.samples.dim, label=f"loss_grad[{k}]"))
            self._record(f"scores.loss_grad[{k}]", path)
        return out

    def digest(self, d_lambda: int, **extra) -> dict:
        out = {"files": self.files, "d_lambda": int(d_lambda)}
        if self.samples is not None:
            out.update(m=self.samples.m, d_theta=self.samples.dim, origin=self.samples.origin)
        out.update(extra)
        return plain(out)


def _build_prior(cfg: RunConfig, d_theta: int):
    factors = []
    for k, f in enumerate(cfg.model["prior"]):
        where = f"model.prior[{k}]"
        with stage(where):
            if any(c >= d_theta for c in f["coords"]):
                raise ContractError(f"coords {f['coords']} out of range for d_theta={d_theta}")
            if f["family"] == "gaussian":
                d = len(f["coords"])
                if "natural" in f:
                    fam = gaussian_family(np.zeros(d), natural=f["natural"])
                else:
                    if len(f["mean"]) != d:
                        raise ContractError(f"mean has {len(f['mean'])} entries for {d} coords")
                    fam = gaussian_family(f["mean"], f["cov"])
            elif "natural" in f:
                fam = invgamma_family(natural=f["natural"])
            else:
                fam = invgamma_family(f["shape"], f["rate"])
        factors.append((f["name"], f["coords"], fam))
    with stage("model.prior"):
        return product_family(factors, d_theta)


def _box(cfg: RunConfig, dim: int, default_center, key: str = "neighbourhood.box") -> BoxNeighborhood:
    spec = cfg.neighbourhood["box"] if key.endswith("box") else cfg.neighbourhood["interval"]
    with stage(key):
        if "lower" in spec:
            lo, hi = np.array(spec["lower"]), np.array(spec["upper"])
        else:
            ctr = np.asarray(default_center if spec["center"] is None else spec["center"], dtype=float)
            rad = np.asarray(spec["radius"], dtype=float)
            if rad.size == 1:
                rad = np.full(ctr.size, rad[0])
            if rad.size != ctr.size:
                raise ConfigError(f"radius has {rad.size} entries, center has {ctr.size}")
            lo, hi = ctr - rad, ctr + rad
        if lo.size != dim:
            raise ConfigError(f"neighbourhood has dimension {lo.size}, model has {dim} hyperparameters")
        return BoxNeighborhood(lo, hi)


def _slice_curves(q, box: BoxNeighborhood, through, n: int) -> list:
    curves = []
    for k, name in enumerate(q.names):
        xs = np.linspace(box.lower[k], box.upper[k], n)
        L = np.repeat(np.asarray(through, dtype=float)[None, :], n, axis=0)
        L[:, k] = xs
        curves.append({"label": f"fd[{name}]", "param": name, "x": plain(xs), "y": plain(evaluate_many(q, L))})
    return curves


def _bound(per_sample, cfg: RunConfig, samples) -> float:
    return chebyshev_error_bound(per_sample, cfg.options.delta, origin=samples.origin, chain_ids=samples.chain_ids)


def _per_block_table(ref, cand, cfg: RunConfig, columns) -> list:
    d = ref.values.shape[1]
    blocks = [list(b) for b in cfg.options.blocks] if cfg.options.blocks else [[k] for k in range(d)]
    with stage("options.blocks"):
        vals = per_dimension_fd(ref, cand, blocks)
    return [{"block": b, "columns": [columns[k] for k in b] if columns else [], "fd": float(v)} for b, v in zip(blocks, vals)]


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------

def _run_estimate(cfg: RunConfig) -> SensitivityReport:
    inp = _Inputs(cfg)
    samples = inp.load_samples()
    ref, cand = inp.scores("ref_posterior"), inp.scores("cand_posterior")
    est = estimate_fd(ref, cand)
    with stage("options.delta"):
        bound = _bound(est.per_sample, cfg, samples)
    return SensitivityReport(
        mode="estimate",
        inputs=inp.digest(0),
        results={"fd": est.value, "m": est.m},
        diagnostics={"chebyshev_error_bound": bound, "delta": cfg.options.delta},
        decompositions={"per_block": _per_block_table(ref, cand, cfg, inp.columns)},
    )


def _run_decompose(cfg: RunConfig) -> SensitivityReport:
    inp = _Inputs(cfg)
    samples = inp.load_samples()
    gl_ref, gl = inp.scores("ref_loss_grad"), inp.scores("cand_loss_grad")
    sp_ref, sp = inp.scores("ref_prior"), inp.scores("cand_prior")
    with stage("options.cross_convention"):
        dec = decompose_fd(gl_ref, gl, sp_ref, sp, cross_convention=cfg.options.cross_convention)
    post_ref = PrecomputedScores(sp_ref.values - gl_ref.values, "ref_posterior")
    post = PrecomputedScores(sp.values - gl.values, "cand_posterior")
    est = estimate_fd(post_ref, post)
    return SensitivityReport(
        mode="decompose",
        inputs=inp.digest(0),
        results={"fd": dec.total, "m": samples.m},
        diagnostics={
            "chebyshev_error_bound": _bound(est.per_sample, cfg, samples),
            "delta": cfg.options.delta,
            "reconstruction_error": dec.reconstruction_error(),
        },
        decompositions={
            "fd_decomposition": {
                "loss_term": dec.loss_term,
                "prior_term": dec.prior_term,
                "cross_term": dec.cross_term,
                "cross_convention": dec.cross_convention,
                "cross_with_factor_2": dec.cross_with_factor_2,
                "cross_paper_literal": dec.cross_paper_literal,
                "total": dec.total,
            },
            "per_block": _per_block_table(post_ref, post, cfg, inp.columns),
        },
    )


def _sens_prior(cfg: RunConfig, inp: _Inputs):
    samples = inp.samples
    prior = _build_prior(cfg, samples.dim)
    ref_prior = inp.scores("ref_prior")
    with stage("model.prior"):
        q = build_prior_only(samples, prior, ref_prior)
    nb = cfg.neighbourhood
    curves = []
    if "vertices" in nb:
        with stage("neighbourhood.vertices"):
            P = PolytopeNeighborhood(nb["vertices"])
            if P.dim != q.dim:
                raise ConfigError(f"vertices have dimension {P.dim}, model has {q.dim} hyperparameters")
            res = sensitivity_polytope(q, P, max_iter=max(cfg.options.max_iter, 50_000))
    else:
        box = _box(cfg, q.dim, prior.lambda_pi)
        if nb["separable"]:
            with stage("neighbourhood.separable"):
                parts = build_prior_only_blocks(samples, prior, ref_prior)
                blocks = []
                for (name, qk), (_, _, sl) in zip(parts, prior.blocks):
                    blocks.append((name, qk, BoxNeighborhood(box.lower[sl], box.upper[sl])))
                res = sensitivity_separable(blocks, max_iter=cfg.options.max_iter, tol=cfg.options.tol)
                # block objectives omit the constant from unowned coordinates
                shift = evaluate(q, res.inf_arg) - res.inf_value
                res.sup_value += shift
                res.inf_value += shift
        else:
            with stage("neighbourhood.box"):
                res = sensitivity_box(q, box, max_iter=cfg.options.max_iter, tol=cfg.options.tol)
        curves = _slice_curves(q, box, res.inf_arg, cfg.options.curve_points)
    cand = prior.score_many(samples.draws, lam=res.sup_arg)
    per_sample = np.einsum("md,md->m", ref_prior.values - cand, ref_prior.values - cand)
    return q, res, curves, per_sample, {}


def _loss(cfg: RunConfig, inp: _Inputs) -> LinearLoss:
    grads = inp.loss_grads()
    lam_ref = cfg.model["loss"]["lambda_ref"]
    with stage("model.loss.lambda_ref"):
        if len(lam_ref) != len(grads):
            raise ConfigError(f"{len(lam_ref)} entries for {len(grads)} loss-gradient files")
        return LinearLoss.from_values(grads, lam_ref)


def _sens_loss(cfg: RunConfig, inp: _Inputs):
    samples = inp.samples
    loss = _loss(cfg, inp)
    with stage("model.loss"):
        q = build_loss_only(samples, loss, loss.lambda_L)
    key = "neighbourhood.interval" if "interval" in cfg.neighbourhood else "neighbourhood.box"
    if "vertices" in cfg.neighbourhood:
        raise ConfigError("neighbourhood.vertices: loss models take a box or an interval")
    box = _box(cfg, q.dim, loss.lambda_L, key)
    with stage(key):
        res = sensitivity_box(q, box, max_iter=cfg.options.max_iter, tol=cfg.options.tol)
    extra = {}
    G = loss.jacobian_many(samples.draws)
    if q.dim == 1:
        eps = float(box.upper[0] - loss.lambda_L[0])
        if box.contains(loss.lambda_L) and eps == float(loss.lambda_L[0] - box.lower[0]):
            extra["learning_rate_sensitivity"] = learning_rate_sensitivity(np.einsum("md,md->m", G[:, 0], G[:, 0]), eps)
    diff = np.einsum("mkd,k->md", G, res.sup_arg - loss.lambda_L)
    per_sample = np.einsum("md,md->m", diff, diff)
    return q, res, _slice_curves(q, box, res.inf_arg, cfg.options.curve_points), per_sample, extra


def _sens_joint(cfg: RunConfig, inp: _Inputs):
    samples = inp.samples
    prior = _build_prior(cfg, samples.dim)
    loss = _loss(cfg, inp)
    ref_post = inp.scores("ref_posterior")
    with stage("model"):
        q = build_joint(samples, prior, loss, ref_post)
    if "box" not in cfg.neighbourhood:
        raise ConfigError("neighbourhood: joint models take a box")
    if cfg.neighbourhood["separable"]:
        raise ConfigError("neighbourhood.separable: joint loss/prior objectives are not block diagonal")
    box = _box(cfg, q.dim, np.concatenate([loss.lambda_L, prior.lambda_pi]))
    with stage("neighbourhood.box"):
        res = sensitivity_box(q, box, max_iter=cfg.options.max_iter, tol=cfg.options.tol)
    dL = loss.d_L
    cand = prior.score_many(samples.draws, lam=res.sup_arg[dL:]) - loss.gradient_many(samples.draws, lam=res.sup_arg[:dL])
    diff = ref_post.values - cand
    per_sample = np.einsum("md,md->m", diff, diff)
    return q, res, _slice_curves(q, box, res.inf_arg, cfg.options.curve_points), per_sample, {}


def _sens_copula(cfg: RunConfig, inp: _Inputs):
    samples = inp.samples
    pair = tuple(cfg.model["copula"]["pair"])
    with stage("model.copula"):
        if max(pair) >= samples.dim:
            raise ContractError(f"pair {list(pair)} out of range for d_theta={samples.dim}")
        f = copula_fd_objective(samples, pair)
    if "interval" not in cfg.neighbourhood:
        raise ConfigError("neighbourhood: copula models take an interval")
    box = _box(cfg, 1, [0.0], "neighbourhood.interval")
    lo, hi = float(box.lower[0]), float(box.upper[0])
    with stage("neighbourhood.interval"):
        if not (-1 < lo and hi < 1):
            raise DomainError(f"copula correlation interval must lie inside (-1, 1), got [{lo}, {hi}]")
        res = sensitivity_scalar_search(f, (lo, hi), grid_n=cfg.options.grid_n)
    xs = np.linspace(lo, hi, cfg.options.curve_points)
    curve = {"label": "fd[lambda_c]", "param": "lambda_c", "x": plain(xs), "y": [f(float(x)) for x in xs]}
    g = copula_score_many(GaussianCopulaScore(float(res.sup_arg[0]), pair), samples.draws)
    per_sample = np.einsum("md,md->m", g, g)
    return None, res, [curve], per_sample, {}


_SENSITIVITY = {"prior": _sens_prior, "loss": _sens_loss, "joint": _sens_joint, "copula": _sens_copula}


def _run_sensitivity(cfg: RunConfig) -> SensitivityReport:
    inp = _Inputs(cfg)
    samples = inp.load_samples()
    q, res, curves, per_sample, extra = _SENSITIVITY[cfg.model["kind"]](cfg, inp)
    diag = {
        "chebyshev_error_bound": _bound(per_sample, cfg, samples),
        "delta": cfg.options.delta,
        "converged": res.converged,
    }
    if q is not None:
        diag["psd_margin"] = q.psd_margin
    diag.update(extra)
    return SensitivityReport(
        mode="sensitivity",
        inputs=inp.digest(len(res.sup_arg), model_kind=cfg.model["kind"]),
        results=result_dict(res),
        diagnostics=plain(diag),
        curves=curves,
    )


def _run_local(cfg: RunConfig) -> SensitivityReport:
    inp = _Inputs(cfg)
    samples = inp.load_samples()
    prior = _build_prior(cfg, samples.dim)
    ref_prior = inp.scores("ref_prior")
    at = np.asarray(cfg.local.get("at", prior.lambda_pi), dtype=float)
    v = np.asarray(cfg.local["direction"], dtype=float)
    with stage("local.at"):
        if at.size != prior.d_T:
            raise ConfigError(f"has {at.size} entries, model has {prior.d_T} hyperparameters")
    with stage("local.direction"):
        if v.size != prior.d_T:
            raise ConfigError(f"has {v.size} entries, model has {prior.d_T} hyperparameters")
        nv = float(np.linalg.norm(v))
        if nv == 0:
            raise ConfigError("direction must be non-zero")
        v = v / nv
        cand = PrecomputedScores(prior.score_many(samples.draws, lam=at), "candidate")
        deriv = directional_derivative(samples, ref_prior, cand, ScoreJacobianField.from_expfam(prior), v)
    with stage("model.prior"):
        q = build_prior_only(samples, prior, ref_prior)
    ts = np.linspace(-1.0, 1.0, cfg.options.curve_points)
    curve = {"label": "fd[t]", "param": "t", "x": plain(ts), "y": plain(evaluate_many(q, at[None, :] + ts[:, None] * v[None, :]))}
    est = estimate_fd(ref_prior, cand)
    return SensitivityReport(
        mode="local",
        inputs=inp.digest(prior.d_T),
        results=plain({
            "directional_derivative": deriv,
            "quadratic_form_derivative": float(v @ q.gradient(at)),
            "fd_at": est.value,
            "at": at,
            "direction": v,
            "names": list(prior.names),
        }),
        diagnostics=plain({
            "chebyshev_error_bound": _bound(est.per_sample, cfg, samples),
            "delta": cfg.options.delta,
            "psd_margin": q.psd_margin,
        }),
        curves=[curve],
    )


def _demo_moments(lam) -> dict | None:
    l0, L1 = split_gaussian_natural(lam, 1)
    if L1[0, 0] >= 0:
        return None
    mu, cov = gaussian_moment_from_natural(l0, L1)
    return {"mu": float(mu[0]), "sigma": float(np.sqrt(cov[0, 0]))}


def _run_gaussian_demo(cfg: RunConfig) -> SensitivityReport:
    p = {**DEMO_DEFAULTS, **cfg.demo}
    rng = np.random.default_rng(cfg.options.seed)
    x = rng.normal(p["theta_true"], p["sigma_l"], size=p["n"])
    xbar = float(np.mean(x))
    cov_lik = np.array([[p["sigma_l"] ** 2]])
    lam_ref = gaussian_natural_from_moment([p["mu_ref"]], [[p["sigma_ref"] ** 2]])
    ref_post = conjugate_posterior_from_natural(lam_ref, cov_lik, [xbar], p["n"])
    samples = SampleSet(ref_post.sample(p["m"], rng))
    ref_prior = PrecomputedScores(-(samples.draws - p["mu_ref"]) / p["sigma_ref"] ** 2, "ref_prior")
    prior = gaussian_family([p["mu_ref"]], [[p["sigma_ref"] ** 2]])
    with stage("demo"):
        q = build_prior_only(samples, prior, ref_prior)
    with stage("demo.vertices"):
        P = PolytopeNeighborhood(p["vertices"])
        res = sensitivity_polytope(q, P)
    mus = np.asarray(p["mu_grid"], dtype=float)
    curves = []
    for s in p["sigma_grid"]:
        L = np.stack([mus / s ** 2, np.full(mus.size, -0.5 / s ** 2)], axis=1)
        curves.append({"label": f"fd[sigma={s!r}]", "param": "mu", "x": plain(mus), "y": plain(evaluate_many(q, L))})
    diag = {"psd_margin": q.psd_margin, "converged": res.converged, "delta": cfg.options.delta}
    sup_m = _demo_moments(res.sup_arg)
    if sup_m is not None:
        cand_post = conjugate_posterior_from_natural(res.sup_arg, cov_lik, [xbar], p["n"])
        diag["closed_form_fd_at_sup"] = fd_gaussian(ref_post, cand_post)
        diag["kl_at_sup"] = kl_gaussian(ref_post, cand_post)
        diag["w2_at_sup"] = w2_gaussian(ref_post, cand_post)
    cand = prior.score_many(samples.draws, lam=res.sup_arg)
    d = ref_prior.values - cand
    diag["chebyshev_error_bound"] = _bound(np.einsum("md,md->m", d, d), cfg, samples)
    results = result_dict(res)
    results["sup_moments"] = sup_m
    results["inf_moments"] = _demo_moments(res.inf_arg)
    results["reference_fd"] = evaluate(q, lam_ref)
    return SensitivityReport(
        mode="gaussian_demo",
        inputs=plain({"files": {}, "m": samples.m, "d_theta": 1, "d_lambda": 2, "seed": cfg.options.seed,
                      "xbar": xbar, "demo": {k: p[k] for k in ("n", "theta_true", "sigma_l", "mu_ref", "sigma_ref", "m")}}),
        results=results,
        diagnostics=plain(diag),
        curves=curves,
    )


_MODES = {
    "estimate": _run_estimate,
    "decompose": _run_decompose,
    "sensitivity": _run_sensitivity,
    "local": _run_local,
    "gaussian_demo": _run_gaussian_demo,
}


def run(cfg: RunConfig) -> SensitivityReport:
    """Execute the pipeline selected by ``cfg.mode``; deterministic given the config and files."""
    return _MODES[cfg.mode](cfg)
