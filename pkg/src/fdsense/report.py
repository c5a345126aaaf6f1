"""Versioned, JSON-serialisable run report."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np

from .config import SPEC_VERSION
from .errors import DataFormatError, NumericalError
from .optimize import SensitivityResult


@dataclass
class SensitivityReport:
    """Everything a run produced.

    ``inputs`` is the digest of what went in (file hashes, ``m``,
    ``d_theta``, ``d_lambda``); ``curves`` is a list of
    ``{"label", "param", "x", "y"}`` mappings ready for :func:`export_curves`.
    """

    mode: str
    inputs: dict
    results: dict
    diagnostics: dict = field(default_factory=dict)
    decompositions: Optional[dict] = None
    curves: list = field(default_factory=list)
    spec_version: str = SPEC_VERSION

    def to_dict(self) -> dict:
        d = asdict(self)
        _check_finite(d, "")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SensitivityReport":
        try:
            return cls(**d)
        except TypeError as exc:
            raise DataFormatError(f"report: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "SensitivityReport":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"report: invalid JSON ({exc})") from None


def _check_finite(obj: Any, where: str) -> None:
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise NumericalError(f"report{where}: non-finite value {obj!r}")
    elif isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{where}.{k}")
    elif isinstance(obj, (list, tuple)):
        for k, v in enumerate(obj):
            _check_finite(v, f"{where}[{k}]")


def plain(x: Any) -> Any:
    """Convert numpy scalars and arrays to JSON-native Python values."""
    if isinstance(x, np.ndarray):
        return [plain(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, dict):
        return {str(k): plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [plain(v) for v in x]
    return x


def result_dict(r: SensitivityResult) -> dict:
    out = {
        "sup_value": r.sup_value,
        "inf_value": r.inf_value,
        "sup_arg": r.sup_arg,
        "inf_arg": r.inf_arg,
        "sensitivity": r.sensitivity,
        "iterations": r.iterations,
        "converged": r.converged,
        "vertex_evaluations": r.vertex_evaluations,
        "names": list(r.names),
    }
    if r.per_block:
        shares = r.block_shares()
        out["per_block"] = [
            {
                "block": str(bid),
                "sup_value": br.sup_value,
                "inf_value": br.inf_value,
                "sensitivity": br.sensitivity,
                "share": shares[bid],
                "converged": br.converged,
            }
            for bid, br in r.per_block
        ]
    return plain(out)
