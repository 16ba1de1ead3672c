"""File formats: commented CSV, JSON reports, matrix files, key-value configs.

See FORMATS.md at the repository root for the byte-level description.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch, ValidationError

TOOL = "rounduq"
MATRIX_MAGIC = b"RUQMAT01"
_HEADER = struct.Struct("<8sQQ")


def schema(command: str, version: int = 1) -> str:
    return f"{TOOL}.{command}.v{version}"


def real(x) -> str:
    """Shortest round-trip decimal for a real; empty for ``None``."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def header_lines(command: str, config: dict) -> list[str]:
    return [
        f"# {TOOL} {command}",
        f"# schema: {schema(command)}",
        "# config: " + json.dumps(config, sort_keys=True, separators=(",", ":")),
    ]


def render_csv(command: str, config: dict, columns: list[str], rows) -> str:
    buf = io.StringIO()
    for line in header_lines(command, config):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([real(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan literals; keep them as strings
        return x if math.isfinite(x) else real(x)
    return obj


def render_json(command: str, config: dict, payload: dict) -> str:
    doc = {"header": {"tool": TOOL, "command": command, "schema": schema(command),
                      "config": config}}
    doc.update(_jsonable(payload))
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def read_csv_rows(path) -> tuple[list[str], list[list[str]]]:
    """Column names and data rows of a commented CSV file."""
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#") and ln.strip()]
    rows = list(csv.reader(lines))
    if not rows:
        return [], []
    return rows[0], rows[1:]


# Matrices -------------------------------------------------------------------


def write_matrix_bin(path, A) -> None:
    """Magic, rows and cols as little-endian u64, then float64 entries column by column."""
    A = np.atleast_2d(np.asarray(A, dtype="<f8"))
    if A.ndim != 2:
        raise ShapeMismatch("only 2-D arrays can be written")
    rows, cols = A.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MATRIX_MAGIC, rows, cols))
        f.write(np.asfortranarray(A).tobytes(order="F"))


def read_matrix_bin(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError("matrix file too short")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise ValidationError("not a matrix file (bad magic)")
    body = data[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise ValidationError("matrix file size does not match its header")
    return np.frombuffer(body, dtype="<f8").reshape((rows, cols), order="F").astype(np.float64)


def write_matrix_csv(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for row in A:
            w.writerow([real(v) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(ln for ln in f if not ln.startswith("#") and ln.strip())]
    if not rows:
        raise ValidationError("empty matrix file")
    if len({len(r) for r in rows}) != 1:
        raise ShapeMismatch("ragged CSV matrix")
    try:
        return np.array([[float(v) for v in r] for r in rows])
    except ValueError as e:
        raise ValidationError(f"non-numeric CSV entry: {e}") from e


def read_matrix(path) -> np.ndarray:
    """Dispatch on extension: ``.bin`` is the binary layout, anything else CSV."""
    return read_matrix_bin(path) if str(path).endswith(".bin") else read_matrix_csv(path)


def write_matrix(path, A) -> None:
    if str(path).endswith(".bin"):
        write_matrix_bin(path, A)
    else:
        write_matrix_csv(path, A)


def read_vector(path) -> np.ndarray:
    A = read_matrix(path)
    if 1 not in A.shape:
        raise ShapeMismatch("expected a single row or column")
    return A.ravel()


# Key-value configs ------------------------------------------------------------


def parse_kv(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys are lower-cased."""
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.lower().replace("-", "_")
        if not k or k in out:
            raise ValidationError(f"line {n}: empty or duplicate key {k!r}")
        out[k] = v
    return out


def read_kv(path) -> dict[str, str]:
    return parse_kv(Path(path).read_text())
