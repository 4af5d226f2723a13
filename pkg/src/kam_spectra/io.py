"""Flat-file conventions shared by the CLI and the dense export.

CSV files are comma-separated with a header row.  Multi-indices are written
as semicolon-joined coordinates (``"1;-2"``) and floats in shortest
round-trip form (``repr``).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .band import BandOperator, from_dense, to_dense
from .errors import ConfigError


def format_index(n) -> str:
    return ";".join(str(int(x)) for x in n)


def parse_index(s: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in s.split(";"))
    except ValueError as exc:
        raise ConfigError(f"bad multi-index {s!r}") from exc


def format_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_operator_csv(A: BandOperator, path) -> None:
    """Nonzero dense entries as ``row,col,re,im`` with lattice-point labels."""
    M = to_dense(A)
    pts = A.window.points
    rows = []
    for i, j in zip(*np.nonzero(M)):
        rows.append([format_index(pts[i]), format_index(pts[j]), float(M[i, j].real), float(M[i, j].imag)])
    write_csv(path, ["row", "col", "re", "im"], rows)


def read_operator_csv(path, grid) -> BandOperator:
    w = grid.window
    M = np.zeros((w.size, w.size), dtype=complex)
    pos = w.position
    for r in read_csv(path):
        i = pos[w.grid_index(parse_index(r["row"]))]
        j = pos[w.grid_index(parse_index(r["col"]))]
        if i < 0 or j < 0:
            raise ConfigError(f"entry ({r['row']}, {r['col']}) lies outside the window")
        M[i, j] = complex(float(r["re"]), float(r["im"]))
    return from_dense(M, grid)


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else format_float(x)
    if isinstance(obj, complex):
        return [jsonable(obj.real), jsonable(obj.imag)]
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2)


def digest(payload) -> str:
    """SHA-256 of the canonical JSON form of ``payload``."""
    canon = json.dumps(jsonable(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
