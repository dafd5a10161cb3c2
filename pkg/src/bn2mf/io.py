"""CSV matrices, preprocessing, flat key-value configuration files and JSON records."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ParseError
from .model import ExposureMatrix


# --------------------------------------------------------------------------
# CSV matrices

def load_csv(path) -> ExposureMatrix:
    """Read a labelled matrix: header row of column ids, first column of row ids."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise ParseError(f"{path}: need a header and at least one data row")
    header = rows[0]
    col_ids = [c.strip() for c in header[1:]]
    row_ids, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
        rid = row[0].strip()
        parsed = []
        for col, cell in zip(col_ids, row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value {cell!r} at ({rid}, {col})") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}:{lineno}: non-finite value {cell!r} at ({rid}, {col})")
            if v < 0:
                raise ParseError(f"{path}:{lineno}: negative value {cell!r} at ({rid}, {col})")
            parsed.append(v)
        row_ids.append(rid)
        values.append(parsed)
    try:
        return ExposureMatrix(np.array(values), tuple(row_ids), tuple(col_ids))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def read_matrix(path) -> tuple[np.ndarray, list[str], list[str]]:
    """Like :func:`load_csv` but accepts signed values and any shape (for solution files)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    header = rows[0]
    try:
        values = np.array([[float(c) for c in r[1:]] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return values.reshape(len(rows) - 1, len(header) - 1), [r[0] for r in rows[1:]], header[1:]


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else ("nan" if math.isnan(v) else str(v))


def write_csv(path, values, row_ids: Sequence[str] | None = None, col_ids: Sequence[str] | None = None,
              index_name: str = "id") -> Path:
    """Write a labelled matrix with round-trip (17 significant digit) precision."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n, p = values.shape
    row_ids = list(row_ids) if row_ids is not None else [f"r{i + 1}" for i in range(n)]
    col_ids = list(col_ids) if col_ids is not None else [f"c{j + 1}" for j in range(p)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([index_name, *col_ids])
        for rid, row in zip(row_ids, values):
            w.writerow([rid, *(_fmt(v) for v in row)])
    return path


def write_matrix(path, x: ExposureMatrix) -> Path:
    return write_csv(path, x.values, x.row_ids, x.col_ids)


# --------------------------------------------------------------------------
# preprocessing

def preprocess(x: ExposureMatrix, lod=None, scale_sd: bool = False, censored=None) -> ExposureMatrix:
    """Substitute LOD/sqrt(2) for censored values, then optionally divide columns by their SD.

    Without ``censored``, any value below its column's LOD counts as censored;
    ``censored`` (an N x P boolean mask) flags sentinel-coded cells explicitly.
    Columns are never mean-centred.
    """
    values = np.array(x.values, dtype=np.float64)
    n, p = values.shape
    if lod is not None:
        lod = np.broadcast_to(np.asarray(lod, dtype=np.float64), (p,))
        if (lod <= 0).any():
            j = int(np.flatnonzero(lod <= 0)[0])
            raise ValueError(f"LOD for column {x.col_ids[j]} must be positive")
        mask = values < lod if censored is None else np.asarray(censored, dtype=bool)
        values = np.where(mask, lod / math.sqrt(2.0), values)
    elif censored is not None:
        raise ValueError("a censoring mask needs LOD values")
    if scale_sd:
        sd = values.std(axis=0, ddof=1)
        if (sd == 0).any():
            j = int(np.flatnonzero(sd == 0)[0])
            raise ValueError(f"column {x.col_ids[j]} has zero variance and cannot be scaled")
        values = values / sd
    return ExposureMatrix(values, x.row_ids, x.col_ids)


def load_lod(path, col_ids: Sequence[str]) -> np.ndarray:
    """LOD file: ``column,lod`` rows (header optional), one per data column."""
    table = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                table[row[0].strip()] = float(row[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise ParseError(f"{path}:{lineno}: expected 'column,lod'") from None
    missing = [c for c in col_ids if c not in table]
    if missing:
        raise ParseError(f"{path}: no LOD for columns {missing}")
    return np.array([table[c] for c in col_ids])


# --------------------------------------------------------------------------
# key-value config

def _coerce(value: str, target_type):
    if target_type is bool:
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return target_type(value.strip())


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def format_kv(mapping: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in mapping.items())


def apply_kv(cls, values: dict[str, str], base=None, path_fields: Iterable[str] = (), root: Path | None = None):
    """Build (or update) dataclass ``cls`` from string values, rejecting unknown keys."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    hints = {name: type(getattr(base, name)) if base is not None else type(f.default)
             for name, f in fields.items()}
    updates = {}
    for key, raw in values.items():
        target = hints[key]
        if target is type(None):
            target = str
        try:
            value = _coerce(raw, target)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        if key in path_fields and value and root is not None and not Path(value).is_absolute():
            value = str((root / value).resolve())
        updates[key] = value
    base = base if base is not None else cls()
    try:
        return dataclasses.replace(base, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------
# JSON records

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
