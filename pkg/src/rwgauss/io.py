"""Matrix files, JSON envelopes and key=value configuration files.

Matrix files are either CSV (one sample per row, optional header line) or
the little-endian ``RW2M`` binary layout::

    b"RW2M" | u32 n | u32 d | n*d float64, row-major
"""

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import InputError

MAGIC = b"RW2M"
SCHEMA_VERSION = 1
_HEADER = struct.Struct("<4sII")


# ---------------------------------------------------------------------------
# matrices


def _parse_row(row):
    return [float(v) for v in row]


def read_csv_matrix(path):
    """Read a CSV matrix; a first row that does not parse as numbers is a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: file is empty")
    try:
        first = _parse_row(rows[0])
    except ValueError:
        rows = rows[1:]
        first = None
        if not rows:
            raise InputError(f"{path}: header but no data rows") from None
    data = []
    for k, row in enumerate(rows):
        if k == 0 and first is not None:
            data.append(first)
            continue
        try:
            data.append(_parse_row(row))
        except ValueError as exc:
            raise InputError(f"{path}: row {k + 1}: {exc}") from None
    widths = {len(r) for r in data}
    if len(widths) != 1:
        raise InputError(f"{path}: rows have differing lengths {sorted(widths)}")
    arr = np.array(data, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{path}: non-finite values")
    return arr


def read_binary_matrix(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InputError(f"{path}: truncated header")
    magic, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InputError(f"{path}: bad magic {magic!r}")
    payload = raw[_HEADER.size:]
    if len(payload) != 8 * n * d:
        raise InputError(f"{path}: header declares {n}x{d} values but payload has {len(payload)} bytes")
    arr = np.frombuffer(payload, dtype="<f8").astype(float).reshape(n, d)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{path}: non-finite values")
    return arr


def read_matrix(path):
    """Read a sample matrix, detecting the binary layout by its magic bytes."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_binary_matrix(path)
    return read_csv_matrix(path)


def write_csv_matrix(path, matrix, header=None):
    """Write with ``%.17g`` so a CSV round trip is exact."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in matrix:
            w.writerow([format_float(v) for v in row])


def write_binary_matrix(path, matrix):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    n, d = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, d))
        fh.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes())


# ---------------------------------------------------------------------------
# JSON


def format_float(x):
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return format(x, ".17g")


def _encode(obj, indent, level):
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," + pad if indent else ", "
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + pad + sep.join(_encode(v, indent, level + 1) for v in obj) + end + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no NaN/inf
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, Path):
        return json.dumps(str(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with every float written to 17 significant digits."""
    return _encode(obj, indent, 0)


def envelope(command, config, seed, results, timings, version):
    return {
        "command": command,
        "version": {"schema": SCHEMA_VERSION, "package": version},
        "config": config,
        "seed": seed,
        "results": results,
        "timings": timings,
    }


# ---------------------------------------------------------------------------
# key=value configuration


def int_list(text):
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def float_list(text):
    return [float(v) for v in text.replace(" ", "").split(",") if v]


def parse_config(text, schema, source="<config>"):
    """Parse ``key = value`` lines against ``schema`` (key -> converter).

    Blank lines and ``#`` comments are ignored.  Unknown keys, repeated keys
    and values the converter rejects raise :class:`InputError`.
    """
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in schema:
            raise InputError(f"{source}:{lineno}: unknown key {key!r}; allowed: {sorted(schema)}")
        if key in out:
            raise InputError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = schema[key](value)
        except (TypeError, ValueError) as exc:
            raise InputError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def read_config(path, schema):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, schema, str(path))
