"""Delimited-text ingestion of samples and score matrices, and curve export.

Files are UTF-8, comma- or tab-separated, with a header row and one draw
per line. A column named ``chain`` in a sample file holds integer chain ids.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataFormatError
from .scores import PrecomputedScores, SampleSet

CHAIN_COLUMN = "chain"


def _read_table(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"{path}: file not found")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"{path}: cannot read file ({exc})") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: file is empty")
    delim = "\t" if "\t" in lines[0] else ","
    rows = list(csv.reader(lines, delimiter=delim))
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataFormatError(f"{path}: no data rows after the header")
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataFormatError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
    return header, body


def _parse_float(path, cell: str, row: int, col: int, name: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataFormatError(f"{path}: non-numeric cell {cell!r} at row {row}, column {col} ({name})") from None
    if not math.isfinite(value):
        raise DataFormatError(f"{path}: non-finite cell {cell!r} at row {row}, column {col} ({name})")
    return value


def _numeric_matrix(path, header, body, columns) -> np.ndarray:
    out = np.empty((len(body), len(columns)))
    for i, row in enumerate(body, start=1):
        for k, j in enumerate(columns):
            out[i - 1, k] = _parse_float(path, row[j].strip(), i, j + 1, header[j])
    return out


def load_samples(path, origin: str = "iid") -> SampleSet:
    """Read a sample file into a :class:`SampleSet`.

    Rows and columns in error messages are 1-based data-row and column
    positions (the header is not counted as a row).
    """
    header, body = _read_table(path)
    chain_col: Optional[int] = header.index(CHAIN_COLUMN) if CHAIN_COLUMN in header else None
    cols = [j for j in range(len(header)) if j != chain_col]
    if not cols:
        raise DataFormatError(f"{path}: no parameter columns")
    draws = _numeric_matrix(path, header, body, cols)
    chain_ids = None
    if chain_col is not None:
        ids = _numeric_matrix(path, header, body, [chain_col])[:, 0]
        if np.any(ids != np.round(ids)):
            raise DataFormatError(f"{path}: chain column must hold integers")
        chain_ids = ids.astype(np.int64)
    return SampleSet(draws, origin=origin, chain_ids=chain_ids)


def sample_columns(path) -> list[str]:
    header, _ = _read_table(path)
    return [h for h in header if h != CHAIN_COLUMN]


def load_score_matrix(path, expected_m: Optional[int] = None, expected_d: Optional[int] = None, label: str = "") -> PrecomputedScores:
    """Read an ``m x d`` score matrix, checking its shape against expectations."""
    header, body = _read_table(path)
    values = _numeric_matrix(path, header, body, range(len(header)))
    m, d = values.shape
    if expected_m is not None and m != expected_m:
        raise DataFormatError(f"{path}: expected m={expected_m}, found {m}")
    if expected_d is not None and d != expected_d:
        raise DataFormatError(f"{path}: expected d={expected_d}, found {d}")
    return PrecomputedScores(values, label or Path(path).stem)


def write_matrix(path, values, header) -> None:
    """Write a numeric matrix with a header; floats use ``repr`` so they re-read exactly."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in values:
            w.writerow([repr(float(v)) for v in row])


def export_curves(curves, path) -> Path:
    """Write curves side by side, two columns ``(param, label)`` per curve.

    ``curves`` is a sequence of mappings with keys ``label``, ``param``,
    ``x`` and ``y`` (a report's ``curves`` field). Shorter curves are padded
    with empty cells.
    """
    if hasattr(curves, "curves"):
        curves = curves.curves
    if not curves:
        raise DataFormatError("no curves requested")
    path = Path(path)
    n = max(len(c["x"]) for c in curves)
    header = []
    for c in curves:
        header += [c["param"], c["label"]]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k in range(n):
                row = []
                for c in curves:
                    if k < len(c["x"]):
                        row += [repr(float(c["x"][k])), repr(float(c["y"][k]))]
                    else:
                        row += ["", ""]
                w.writerow(row)
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot write curves ({exc})") from None
    return path


def load_curves(path) -> list[dict]:
    """Inverse of :func:`export_curves`."""
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) % 2:
        raise DataFormatError(f"{path}: curve header must hold (param, label) column pairs")
    header = rows[0]
    curves = []
    for j in range(0, len(header), 2):
        xs, ys = [], []
        for i, row in enumerate(rows[1:], start=1):
            if row[j] == "":
                continue
            xs.append(_parse_float(path, row[j], i, j + 1, header[j]))
            ys.append(_parse_float(path, row[j + 1], i, j + 2, header[j + 1]))
        curves.append({"label": header[j + 1], "param": header[j], "x": xs, "y": ys})
    return curves
