"""File formats: genotype/phenotype/covariate CSVs and JSON reports.

Genotype CSV: header row of variant IDs, one individual per row.
Phenotype CSV: a single column, optional header.
Covariate CSV: header row, one individual per row; an intercept column is
added unless one is already present.
Reports and configs are JSON carrying a ``schema_version`` field.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import InputError

SCHEMA_VERSION = 1


def _read_rows(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise InputError(f"{path} is empty")
    return rows


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _to_matrix(rows, path):
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise InputError(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")
        try:
            out[i] = [float(c) for c in row]
        except ValueError:
            raise InputError(f"{path}: non-numeric value in row {i + 1}") from None
    if not np.all(np.isfinite(out)):
        raise InputError(f"{path}: missing or non-finite values")
    return out


def read_genotypes(path):
    """Return (values, variant_ids)."""
    rows = _read_rows(path)
    header, body = rows[0], rows[1:]
    if not body:
        raise InputError(f"{path}: no data rows")
    if all(_is_number(c) for c in header):
        raise InputError(f"{path}: first row must hold variant IDs")
    ids = [c.strip() for c in header]
    if len(set(ids)) != len(ids):
        raise InputError(f"{path}: duplicate variant IDs")
    return _to_matrix(body, path), ids


def read_phenotype(path) -> np.ndarray:
    rows = _read_rows(path)
    if not _is_number(rows[0][0]):
        rows = rows[1:]
    if any(len(r) != 1 for r in rows):
        raise InputError(f"{path}: phenotype file must have exactly one column")
    return _to_matrix(rows, path)[:, 0]


def read_covariates(path) -> np.ndarray:
    rows = _read_rows(path)
    if all(_is_number(c) for c in rows[0]):
        body = rows
    else:
        body = rows[1:]
    X = _to_matrix(body, path)
    const = np.all(X == X[:1], axis=0) & (X[0] != 0)
    if not const.any():
        X = np.column_stack([np.ones(X.shape[0]), X])
    return X


def write_genotypes(path, values, variant_ids):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(variant_ids)
        for row in np.asarray(values):
            w.writerow([repr(float(x)) for x in row])


def write_vector(path, values, header):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([header])
        for x in np.asarray(values).ravel():
            w.writerow([repr(float(x))])


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
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(kind: str, payload: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, **_jsonable(payload)}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_json(path, kind: str, payload: dict):
    text = dumps(kind, payload)
    if path is None or str(path) == "-":
        print(text, end="")
        return
    _ensure_parent(path)
    with open(path, "w") as fh:
        fh.write(text)


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise InputError(f"{path}: unsupported schema_version {version}")
    return doc


def write_table(path, header, rows):
    """CSV with floats written in round-trip form."""
    def fmt(x):
        if isinstance(x, (float, np.floating)):
            return repr(float(x))
        return x

    if path is None or str(path) == "-":
        import sys
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows([[fmt(x) for x in r] for r in rows])
        return
    _ensure_parent(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[fmt(x) for x in r] for r in rows])


def read_table(path):
    rows = _read_rows(path)
    return rows[0], rows[1:]


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(str(path)))
    os.makedirs(parent, exist_ok=True)
