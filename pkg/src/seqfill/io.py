"""File formats: sequence, matrix and mask CSVs and model JSON documents.

Sequence CSVs hold one row per step and one column per coordinate; an empty
cell marks a missing value. A header row is optional (detected when any cell
of the first row is not a number); a leading header column named ``z``
carries timestamps. The text of present cells is kept so that writing a
reconstruction reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mixture import GaussianMixture
from .training import GtmModel, gtm_to_mixture

__all__ = [
    "DataFormatError",
    "SequenceFile",
    "read_sequence",
    "write_sequence",
    "read_matrix",
    "write_matrix",
    "read_mask",
    "write_mask",
    "load_model",
    "save_model",
    "file_sha256",
    "format_float",
]


class DataFormatError(ValueError):
    """Malformed or inconsistent input file."""


def format_float(x: float) -> str:
    """Shortest text that reads back to the same double."""
    return repr(float(x))


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _read_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [[c.strip() for c in r] for r in csv.reader(fh)]
    # blank lines are skipped; a row of empty cells is an all-missing step
    rows = [r for r in rows if r]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return rows


def _split_header(rows):
    first = rows[0]
    if any(c and not _is_number(c) for c in first):
        return first, rows[1:]
    return None, rows


@dataclass(frozen=True, eq=False)
class SequenceFile:
    """Parsed sequence CSV: values (NaN where missing), presence mask,
    optional timestamps, optional header and the raw cell text."""

    values: np.ndarray
    mask: np.ndarray
    timestamps: np.ndarray | None
    header: list[str] | None
    raw: list[list[str]]
    z_text: list[str] | None = None


def read_sequence(path) -> SequenceFile:
    header, body = _split_header(_read_rows(path))
    if not body:
        raise DataFormatError(f"{path}: header but no data rows")
    has_z = header is not None and header[0].lower() == "z"
    width = len(header) if header is not None else len(body[0])
    timestamps = [] if has_z else None
    z_text = [] if has_z else None
    raw, values = [], []
    for i, row in enumerate(body, start=1):
        if len(row) != width:
            raise DataFormatError(f"{path}: row {i} has {len(row)} cells, expected {width}")
        if has_z:
            if not _is_number(row[0]):
                raise DataFormatError(f"{path}: row {i} has a missing or non-numeric timestamp")
            timestamps.append(float(row[0]))
            z_text.append(row[0])
            row = row[1:]
        vals = []
        for c in row:
            if c == "":
                vals.append(math.nan)
            elif _is_number(c) and math.isfinite(float(c)):
                vals.append(float(c))
            else:
                raise DataFormatError(f"{path}: row {i} has a non-numeric cell {c!r}")
        raw.append(list(row))
        values.append(vals)
    values = np.array(values, dtype=float)
    if values.shape[1] == 0:
        raise DataFormatError(f"{path}: no coordinate columns")
    return SequenceFile(values, ~np.isnan(values),
                        np.array(timestamps) if timestamps is not None else None, header, raw, z_text)


def write_sequence(path, values, header=None, timestamps=None, raw=None) -> None:
    """Write a complete sequence. Cells whose ``raw`` text is non-empty are
    copied verbatim; the rest use :func:`format_float`. String timestamps
    are written as given."""
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for n, row in enumerate(values):
            cells = [raw[n][d] if raw is not None and raw[n][d] != "" else format_float(v)
                     for d, v in enumerate(row)]
            if timestamps is not None:
                z = timestamps[n]
                cells.insert(0, z if isinstance(z, str) else format_float(z))
            w.writerow(cells)


def read_matrix(path) -> np.ndarray:
    """Complete numeric matrix (optional header, no missing cells)."""
    seq = read_sequence(path)
    if not seq.mask.all():
        raise DataFormatError(f"{path}: missing cells are not allowed here")
    return seq.values


def write_matrix(path, values, header=None) -> None:
    write_sequence(path, values, header)


def read_mask(path) -> np.ndarray:
    """0/1 CSV (1 = present) as a boolean array."""
    _, body = _split_header(_read_rows(path))
    out = []
    for i, row in enumerate(body, start=1):
        if any(c not in ("0", "1") for c in row):
            raise DataFormatError(f"{path}: row {i} must hold only 0 and 1")
        out.append([c == "1" for c in row])
    if len({len(r) for r in out}) != 1:
        raise DataFormatError(f"{path}: rows have different lengths")
    return np.array(out, dtype=bool)


def write_mask(path, mask) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(mask, dtype=bool):
            w.writerow(["1" if m else "0" for m in row])


def load_model(path) -> tuple[GaussianMixture, GtmModel | None]:
    """Mixture from a model JSON; GTM documents are converted and also returned."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise DataFormatError(f"{path}: a model document must be a JSON object")
    try:
        if "weight_matrix" in doc:
            gtm = GtmModel.from_dict(doc)
            return gtm_to_mixture(gtm), gtm
        return GaussianMixture.from_dict(doc), None
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: not a model document ({exc})") from exc


def save_model(path, model) -> None:
    Path(path).write_text(model.to_json() + "\n")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
