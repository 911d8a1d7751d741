"""Reading and writing measures, plus the deterministic JSON writer."""
import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError
from .transport import DiscreteMeasure

__all__ = ["read_measure", "read_matrix", "write_measure", "dumps", "write_csv", "format_csv", "SCHEMA"]

SCHEMA = 1
_LOAD_TOL = 1e-6


def _normalise(points, weights, source):
    w = np.asarray(weights, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise InputError(f"{source}: weights must be finite and nonnegative")
    total = w.sum()
    if abs(total - 1.0) > _LOAD_TOL:
        raise InputError(f"{source}: weights sum to {total!r}, not within {_LOAD_TOL:g} of 1")
    return DiscreteMeasure(np.asarray(points, dtype=float), w / total)


def read_measure(path):
    """Load a measure from CSV (``w,x1,...,xd``) or JSON (``points``/``weights``)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
            points, weights = data["points"], data["weights"]
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{path}: expected an object with 'points' and 'weights' ({exc})") from None
        return _normalise(points, weights, path)
    rows = list(csv.reader(line for line in text.splitlines() if line.strip()))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header != ["w"] + [f"x{k}" for k in range(1, d + 1)]:
        raise InputError(f"{path}: header must be w,x1,...,xd, got {','.join(header)}")
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if body.ndim != 2 or body.shape[0] == 0 or body.shape[1] != d + 1:
        raise InputError(f"{path}: every row needs {d + 1} fields")
    return _normalise(body[:, 1:], body[:, 0], path)


def read_matrix(path):
    """Numeric CSV table under a one-line header; returns (header, rows)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    rows = list(csv.reader(line for line in text.splitlines() if line.strip()))
    if len(rows) < 2:
        raise InputError(f"{path}: need a header and at least one row")
    header = [h.strip() for h in rows[0]]
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if body.ndim != 2 or body.shape[1] != len(header):
        raise InputError(f"{path}: every row needs {len(header)} fields")
    return header, body


def _fmt(x):
    return format(float(x), ".17g")


def write_measure(path, mu, extra=None, extra_prefix="y"):
    """Write ``mu`` as CSV with 17 significant digits; ``extra`` adds columns."""
    header = ["w"] + [f"x{k}" for k in range(1, mu.dim + 1)]
    rows = np.column_stack([mu.weights, mu.points])
    if extra is not None:
        extra = np.asarray(extra, dtype=float).reshape(mu.n, -1)
        header += [f"{extra_prefix}{k}" for k in range(1, extra.shape[1] + 1)]
        rows = np.column_stack([rows, extra])
    write_csv(path, header, rows)


def format_csv(header, rows):
    """CSV text with integers verbatim, floats at 17 digits, None as empty."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(header)
    for row in rows:
        out.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_csv(header, rows))


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _fmt(v)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _Float(obj)
    return obj


class _Float(float):
    def __repr__(self):
        if math.isnan(self):
            return "NaN"
        if math.isinf(self):
            return "Infinity" if self > 0 else "-Infinity"
        text = _fmt(self)
        # keep the float type visible to JSON readers
        return text if any(c in text for c in ".en") else text + ".0"


def dumps(obj):
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    return _dump(_plain(obj))


def _dump(o):
    if isinstance(o, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_dump(v)}" for k, v in sorted(o.items())) + "}"
    if isinstance(o, list):
        return "[" + ", ".join(_dump(v) for v in o) + "]"
    if isinstance(o, float):
        return repr(_Float(o))
    return json.dumps(o)
