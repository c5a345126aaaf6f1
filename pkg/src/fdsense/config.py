"""Run configuration: a YAML (or JSON) document validated fail-closed.

Unknown keys anywhere in the document are errors, and every error names
the dotted key path that caused it. Relative file paths resolve against
the directory holding the config file. The full schema is documented in
the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError

MODES = ("estimate", "sensitivity", "local", "gaussian_demo", "decompose")
MODEL_KINDS = ("prior", "loss", "joint", "copula")
FAMILIES = ("gaussian", "inverse_gamma")
SPEC_VERSION = "1.0"

_TOP = {"spec_version", "mode", "samples", "scores", "model", "neighbourhood", "local", "options", "demo"}
_SAMPLES = {"path", "origin"}
_SCORES = {"ref_posterior", "cand_posterior", "ref_prior", "cand_prior", "ref_loss_grad", "cand_loss_grad", "loss_grad"}
_MODEL = {"kind", "prior", "loss", "copula"}
_FACTOR = {"name", "family", "coords", "mean", "cov", "shape", "rate", "natural"}
_LOSS = {"lambda_ref"}
_COPULA = {"pair"}
_NEIGH = {"box", "vertices", "interval", "separable"}
_BOX = {"lower", "upper", "center", "radius"}
_INTERVAL = {"lower", "upper", "center", "epsilon"}
_LOCAL = {"at", "direction"}
_OPTIONS = {"seed", "grid_n", "max_iter", "tol", "summation", "delta", "cross_convention", "curve_points", "blocks"}
_DEMO = {"n", "theta_true", "sigma_l", "mu_ref", "sigma_ref", "m", "vertices", "mu_grid", "sigma_grid"}


@dataclass(frozen=True)
class Options:
    seed: int = 0
    grid_n: int = 512
    max_iter: int = 10_000
    tol: float = 1e-12
    summation: str = "exact"
    delta: float = 0.05
    cross_convention: str = "with_factor_2"
    curve_points: int = 101
    blocks: Optional[tuple] = None


@dataclass(frozen=True)
class RunConfig:
    """Validated run description. ``raw`` keeps the parsed document for reporting."""

    mode: str
    samples_path: Optional[Path] = None
    origin: str = "iid"
    scores_paths: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    neighbourhood: dict = field(default_factory=dict)
    local: dict = field(default_factory=dict)
    demo: dict = field(default_factory=dict)
    options: Options = field(default_factory=Options)
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict, compare=False)

    def display_path(self, path: Path) -> str:
        """Path as written relative to the config directory, for reports."""
        try:
            return Path(path).relative_to(self.base_dir).as_posix()
        except ValueError:
            return Path(path).as_posix()


def _check_keys(obj: Any, allowed: set, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(obj).__name__}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed {sorted(allowed)}")
    return obj


def _key(where: str, k: str) -> str:
    return f"{where}.{k}" if where else k


def _number(value, where: str, integer: bool = False, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and value != int(value):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{where}: must be > 0, got {value!r}")
    return int(value) if integer else float(value)


def number_list(value, where: str) -> list:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{where}: expected a non-empty list of numbers")
    return [_number(v, f"{where}[{k}]") for k, v in enumerate(value)]


def matrix(value, where: str) -> list:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{where}: expected a non-empty list of rows")
    rows = [number_list(r, f"{where}[{k}]") for k, r in enumerate(value)]
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{where}: rows have different lengths")
    return rows


def _path(value, where: str, base: Path) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{where}: expected a file path")
    p = Path(value)
    p = p if p.is_absolute() else base / p
    if not p.is_file():
        raise ConfigError(f"{where}: file not found: {value}")
    return p


def _choice(value, allowed, where: str) -> str:
    if value not in allowed:
        raise ConfigError(f"{where}: expected one of {list(allowed)}, got {value!r}")
    return value


def _parse_factor(f, where: str) -> dict:
    _check_keys(f, _FACTOR, where)
    for req in ("name", "family", "coords"):
        if req not in f:
            raise ConfigError(f"{where}: missing key '{req}'")
    if not isinstance(f["name"], str) or not f["name"]:
        raise ConfigError(f"{where}.name: expected a non-empty string")
    fam = _choice(f["family"], FAMILIES, f"{where}.family")
    coords = f["coords"]
    if not isinstance(coords, list) or not coords:
        raise ConfigError(f"{where}.coords: expected a non-empty list of column indices")
    coords = [int(_number(c, f"{where}.coords[{k}]", integer=True)) for k, c in enumerate(coords)]
    out = {"name": f["name"], "family": fam, "coords": coords}
    if "natural" in f:
        if set(f) & {"mean", "cov", "shape", "rate"}:
            raise ConfigError(f"{where}: give either 'natural' or moment parameters, not both")
        out["natural"] = number_list(f["natural"], f"{where}.natural")
    elif fam == "gaussian":
        if "mean" not in f or "cov" not in f:
            raise ConfigError(f"{where}: gaussian factor needs 'mean' and 'cov' (or 'natural')")
        out["mean"] = number_list(f["mean"], f"{where}.mean")
        out["cov"] = matrix(f["cov"], f"{where}.cov")
    else:
        if "shape" not in f or "rate" not in f:
            raise ConfigError(f"{where}: inverse_gamma factor needs 'shape' and 'rate' (or 'natural')")
        if len(coords) != 1:
            raise ConfigError(f"{where}.coords: inverse_gamma factor takes exactly one coordinate")
        out["shape"] = _number(f["shape"], f"{where}.shape", positive=True)
        out["rate"] = _number(f["rate"], f"{where}.rate", positive=True)
    return out


def _parse_model(obj, where: str) -> dict:
    _check_keys(obj, _MODEL, where)
    if "kind" not in obj:
        raise ConfigError(f"{where}: missing key 'kind'")
    out = {"kind": _choice(obj["kind"], MODEL_KINDS, f"{where}.kind")}
    if "prior" in obj:
        if not isinstance(obj["prior"], list) or not obj["prior"]:
            raise ConfigError(f"{where}.prior: expected a non-empty list of factors")
        out["prior"] = [_parse_factor(f, f"{where}.prior[{k}]") for k, f in enumerate(obj["prior"])]
    if "loss" in obj:
        _check_keys(obj["loss"], _LOSS, f"{where}.loss")
        if "lambda_ref" not in obj["loss"]:
            raise ConfigError(f"{where}.loss: missing key 'lambda_ref'")
        out["loss"] = {"lambda_ref": number_list(obj["loss"]["lambda_ref"], f"{where}.loss.lambda_ref")}
    if "copula" in obj:
        _check_keys(obj["copula"], _COPULA, f"{where}.copula")
        pair = obj["copula"].get("pair")
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"{where}.copula.pair: expected two column indices")
        out["copula"] = {"pair": [int(_number(c, f"{where}.copula.pair[{k}]", integer=True)) for k, c in enumerate(pair)]}
    need = {"prior": ("prior",), "loss": ("loss",), "joint": ("prior", "loss"), "copula": ("copula",)}[out["kind"]]
    for k in need:
        if k not in out:
            raise ConfigError(f"{where}: kind '{out['kind']}' needs key '{k}'")
    return out


def _parse_bounds(obj, allowed: set, radius_key: str, where: str) -> dict:
    _check_keys(obj, allowed, where)
    has_lu = "lower" in obj or "upper" in obj
    has_cr = "center" in obj or radius_key in obj
    if has_lu == has_cr:
        raise ConfigError(f"{where}: give either lower/upper or center/{radius_key}")
    if has_lu:
        if "lower" not in obj or "upper" not in obj:
            raise ConfigError(f"{where}: both 'lower' and 'upper' are required")
        lo = number_list(_listify(obj["lower"]), f"{where}.lower")
        hi = number_list(_listify(obj["upper"]), f"{where}.upper")
    else:
        if radius_key not in obj:
            raise ConfigError(f"{where}: missing key '{radius_key}'")
        rad = number_list(_listify(obj[radius_key]), f"{where}.{radius_key}")
        if "center" in obj:
            ctr = number_list(_listify(obj["center"]), f"{where}.center")
        else:
            ctr = None
        if ctr is not None and len(rad) == 1 and len(ctr) > 1:
            rad = rad * len(ctr)
        if any(r < 0 for r in rad):
            raise ConfigError(f"{where}.{radius_key}: must be >= 0")
        return {"center": ctr, "radius": rad}
    if len(lo) != len(hi):
        raise ConfigError(f"{where}: lower has {len(lo)} entries, upper has {len(hi)}")
    bad = [k for k in range(len(lo)) if lo[k] > hi[k]]
    if bad:
        raise ConfigError(f"{where}: lower > upper at index {bad[0]}")
    return {"lower": lo, "upper": hi}


def _listify(v):
    return v if isinstance(v, list) else [v]


def _parse_neighbourhood(obj, where: str) -> dict:
    _check_keys(obj, _NEIGH, where)
    kinds = [k for k in ("box", "vertices", "interval") if k in obj]
    if len(kinds) != 1:
        raise ConfigError(f"{where}: give exactly one of 'box', 'vertices', 'interval'")
    out = {"separable": False}
    if "separable" in obj:
        if not isinstance(obj["separable"], bool):
            raise ConfigError(f"{where}.separable: expected true or false")
        out["separable"] = obj["separable"]
    kind = kinds[0]
    if kind == "box":
        out["box"] = _parse_bounds(obj["box"], _BOX, "radius", f"{where}.box")
    elif kind == "interval":
        out["interval"] = _parse_bounds(obj["interval"], _INTERVAL, "epsilon", f"{where}.interval")
    else:
        out["vertices"] = matrix(obj["vertices"], f"{where}.vertices")
    if out["separable"] and kind != "box":
        raise ConfigError(f"{where}.separable: only valid with a box neighbourhood")
    return out


def _parse_options(obj, where: str) -> Options:
    _check_keys(obj, _OPTIONS, where)
    kw = {}
    for k in ("seed", "grid_n", "max_iter", "curve_points"):
        if k in obj:
            kw[k] = int(_number(obj[k], f"{where}.{k}", integer=True))
    if kw.get("seed", 0) < 0:
        raise ConfigError(f"{where}.seed: must be >= 0")
    for k in ("grid_n", "max_iter", "curve_points"):
        if k in kw and kw[k] < (3 if k == "grid_n" else 1):
            raise ConfigError(f"{where}.{k}: too small ({kw[k]})")
    if "tol" in obj:
        kw["tol"] = _number(obj["tol"], f"{where}.tol", positive=True)
    if "delta" in obj:
        d = _number(obj["delta"], f"{where}.delta")
        if not 0 < d < 1:
            raise ConfigError(f"{where}.delta: must lie in (0, 1), got {d}")
        kw["delta"] = d
    if "summation" in obj:
        kw["summation"] = _choice(obj["summation"], ("exact",), f"{where}.summation")
    if "cross_convention" in obj:
        kw["cross_convention"] = _choice(obj["cross_convention"], ("with_factor_2", "paper_literal"), f"{where}.cross_convention")
    if "blocks" in obj:
        b = obj["blocks"]
        if not isinstance(b, list) or not b:
            raise ConfigError(f"{where}.blocks: expected a list of column-index lists")
        kw["blocks"] = tuple(
            tuple(int(_number(c, f"{where}.blocks[{i}][{j}]", integer=True)) for j, c in enumerate(_listify(blk)))
            for i, blk in enumerate(b)
        )
    return Options(**kw)


def _parse_demo(obj, where: str) -> dict:
    _check_keys(obj, _DEMO, where)
    out = {}
    for k in ("n", "m"):
        if k in obj:
            out[k] = int(_number(obj[k], f"{where}.{k}", integer=True, positive=True))
    for k in ("theta_true", "mu_ref"):
        if k in obj:
            out[k] = _number(obj[k], f"{where}.{k}")
    for k in ("sigma_l", "sigma_ref"):
        if k in obj:
            out[k] = _number(obj[k], f"{where}.{k}", positive=True)
    if "vertices" in obj:
        out["vertices"] = matrix(obj["vertices"], f"{where}.vertices")
        if len(out["vertices"][0]) != 2:
            raise ConfigError(f"{where}.vertices: vertices must have two coordinates")
    if "mu_grid" in obj:
        out["mu_grid"] = number_list(obj["mu_grid"], f"{where}.mu_grid")
    if "sigma_grid" in obj:
        out["sigma_grid"] = number_list(obj["sigma_grid"], f"{where}.sigma_grid")
        if any(s <= 0 for s in out["sigma_grid"]):
            raise ConfigError(f"{where}.sigma_grid: entries must be > 0")
    return out


_REQUIRED_SCORES = {
    "estimate": ("ref_posterior", "cand_posterior"),
    "decompose": ("ref_loss_grad", "cand_loss_grad", "ref_prior", "cand_prior"),
    "local": ("ref_prior",),
}


def parse_config(doc: Any, base_dir=".", mode: Optional[str] = None) -> RunConfig:
    """Validate a parsed config document. ``mode`` (from the command line) must agree with ``doc['mode']`` if both are given."""
    base = Path(base_dir)
    _check_keys(doc, _TOP, "<config>")
    if "spec_version" in doc and str(doc["spec_version"]) != SPEC_VERSION:
        raise ConfigError(f"spec_version: unsupported version {doc['spec_version']!r}, expected {SPEC_VERSION!r}")
    doc_mode = doc.get("mode")
    if doc_mode is not None:
        _choice(doc_mode, MODES, "mode")
    if mode is not None:
        _choice(mode, MODES, "mode")
        if doc_mode is not None and doc_mode != mode:
            raise ConfigError(f"mode: config says {doc_mode!r} but {mode!r} was requested")
    mode = mode or doc_mode
    if mode is None:
        raise ConfigError("mode: missing")

    kw: dict = {"mode": mode, "base_dir": base, "raw": doc}
    if "samples" in doc:
        s = _check_keys(doc["samples"], _SAMPLES, "samples")
        if "path" not in s:
            raise ConfigError("samples: missing key 'path'")
        kw["samples_path"] = _path(s["path"], "samples.path", base)
        kw["origin"] = _choice(s.get("origin", "iid"), ("iid", "mcmc"), "samples.origin")
    if "scores" in doc:
        sc = _check_keys(doc["scores"], _SCORES, "scores")
        paths = {}
        for k, v in sc.items():
            if k == "loss_grad":
                paths[k] = [_path(p, f"scores.loss_grad[{i}]", base) for i, p in enumerate(_listify(v))]
            else:
                paths[k] = _path(v, f"scores.{k}", base)
        kw["scores_paths"] = paths
    if "model" in doc:
        kw["model"] = _parse_model(doc["model"], "model")
    if "neighbourhood" in doc:
        kw["neighbourhood"] = _parse_neighbourhood(doc["neighbourhood"], "neighbourhood")
    if "local" in doc:
        loc = _check_keys(doc["local"], _LOCAL, "local")
        if "direction" not in loc:
            raise ConfigError("local: missing key 'direction'")
        kw["local"] = {"direction": number_list(loc["direction"], "local.direction")}
        if "at" in loc:
            kw["local"]["at"] = number_list(loc["at"], "local.at")
    if "options" in doc:
        kw["options"] = _parse_options(doc["options"], "options")
    if "demo" in doc:
        kw["demo"] = _parse_demo(doc["demo"], "demo")

    if mode != "gaussian_demo" and "samples_path" not in kw:
        raise ConfigError(f"samples: required for mode '{mode}'")
    for k in _REQUIRED_SCORES.get(mode, ()):
        if k not in kw.get("scores_paths", {}):
            raise ConfigError(f"scores.{k}: required for mode '{mode}'")
    if mode == "sensitivity":
        if "model" not in kw:
            raise ConfigError("model: required for mode 'sensitivity'")
        if "neighbourhood" not in kw:
            raise ConfigError("neighbourhood: required for mode 'sensitivity'")
        kind = kw["model"]["kind"]
        need = {"prior": ("ref_prior",), "loss": ("loss_grad",), "joint": ("ref_posterior", "loss_grad"), "copula": ()}[kind]
        for k in need:
            if k not in kw.get("scores_paths", {}):
                raise ConfigError(f"scores.{k}: required for model kind '{kind}'")
    if mode == "local":
        if "local" not in kw:
            raise ConfigError("local: required for mode 'local'")
        if "model" not in kw or kw["model"]["kind"] != "prior":
            raise ConfigError("model.kind: mode 'local' needs a 'prior' model")
    return RunConfig(**kw)


def load_config(path, mode: Optional[str] = None) -> RunConfig:
    """Read and validate a YAML or JSON config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"<config>: file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (yaml.YAMLError, UnicodeDecodeError) as exc:
        raise ConfigError(f"<config>: cannot parse {path}: {exc}") from None
    if doc is None:
        doc = {}
    return parse_config(doc, base_dir=path.parent, mode=mode)
