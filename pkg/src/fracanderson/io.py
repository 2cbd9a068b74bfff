"""Small CSV/JSON helpers shared by the table writers and the CLI.

CSV files carry one metadata comment line ``# key=value key=value ...``
followed by a column header and data rows.  Floats are written with 17
significant digits so that a round trip is exact.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

__all__ = ["format_float", "format_meta", "parse_meta", "write_csv", "read_csv", "write_json", "read_json", "to_jsonable"]


def format_float(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def _format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def format_meta(meta):
    return "# " + " ".join(f"{k}={_format_value(v)}" for k, v in meta.items())


def _parse_scalar(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text in ("true", "false"):
        return text == "true"
    return text


def parse_meta(line):
    """Inverse of :func:`format_meta`; values are converted to int/float where possible."""
    line = line.strip()
    if not line.startswith("#"):
        raise ValueError("metadata line must start with '#'")
    meta = {}
    for token in line[1:].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise ValueError(f"bad metadata token {token!r}")
        meta[key] = _parse_scalar(value)
    return meta


def write_csv(path, meta, columns, rows):
    """Write ``rows`` (iterables of numbers) under a metadata line and a header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if meta is not None:
            fh.write(format_meta(meta) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_format_value(v) for v in row])
    return path


def read_csv(path):
    """Return ``(meta, columns, rows)``; numeric cells are parsed."""
    with Path(path).open() as fh:
        lines = fh.read().splitlines()
    meta = {}
    if lines and lines[0].startswith("#"):
        meta = parse_meta(lines[0])
        lines = lines[1:]
    reader = csv.reader(lines)
    columns = next(reader)
    rows = [[_parse_scalar(c) for c in row] for row in reader]
    return meta, columns, rows


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays, tuples and dataclass-like objects."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if hasattr(obj, "_asdict"):
        return to_jsonable(obj._asdict())
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan; keep them readable as strings
        return v if math.isfinite(v) else format_float(v)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, payload):
    path = Path(path)
    text = json.dumps(to_jsonable(payload), indent=2, sort_keys=True)
    path.write_text(text + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
