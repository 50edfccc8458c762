"""CSV and JSON helpers with the on-disk conventions used across the package.

Floats are written with 17 significant digits so that a value read back is
bit-identical to the one written.
"""

import csv
import io
import json
from pathlib import Path

import numpy as np

from afcsim.errors import ShapeError


def format_float(x):
    return "%.17g" % float(x)


def csv_text(header, columns):
    """Render equal-length columns as CSV text with a header row."""
    columns = [np.asarray(c) for c in columns]
    if len(header) != len(columns):
        raise ValueError("header and columns differ in length")
    n = len(columns[0])
    if any(len(c) != n for c in columns):
        raise ValueError("columns differ in length")
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*columns):
        buf.write(",".join(format_float(v) for v in row) + "\n")
    return buf.getvalue()


def write_csv(path, header, columns):
    Path(path).write_text(csv_text(header, columns), encoding="utf-8")


def read_csv(path, expected_header=None):
    """Read a numeric CSV written by :func:`write_csv`.

    Returns a dict mapping column name to a float array.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ShapeError(f"{path}: empty CSV file") from None
        if expected_header is not None and header != list(expected_header):
            raise ShapeError(
                f"{path}: expected header {','.join(expected_header)}, got {','.join(header)}"
            )
        try:
            rows = [[float(v) for v in row] for row in reader if row]
        except ValueError as exc:
            raise ShapeError(f"{path}: non-numeric value ({exc})") from None
    if any(len(r) != len(header) for r in rows):
        raise ShapeError(f"{path}: rows do not match the {len(header)}-column header")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {name: data[:, i].copy() for i, name in enumerate(header)}


def json_text(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(json_text(obj), encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if not np.isfinite(x):
            return None
        return x
    return obj
