"""Plain-text serialization helpers (CSV with ``#`` headers, JSON)."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np


def fmt(x: float) -> str:
    """Format a float with 17 significant digits (exact round trip)."""
    return format(float(x), ".17g")


def write_csv(path, columns: dict, header: Sequence[str] = ()) -> Path:
    """Write equally long 1-d arrays as CSV columns.

    ``header`` lines are written first, each prefixed with ``#``.
    """
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    size = {a.shape for a in arrays}
    if len(size) != 1:
        raise ValueError("columns must have equal length")
    lines = [f"# {h}" for h in header]
    lines.append(",".join(names))
    for row in zip(*arrays):
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path) -> tuple[dict, list[str]]:
    """Read a file produced by :func:`write_csv`.

    Returns the columns as arrays and the header lines without ``#``.
    """
    header, rows, names = [], [], None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            header.append(line[1:].strip())
        elif names is None:
            names = line.split(",")
        else:
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows, dtype=float).reshape(-1, len(names))
    return {k: data[:, i] for i, k in enumerate(names)}, header


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def to_json(obj) -> str:
    """Serialize to JSON; non-finite floats become ``null``.

    Floats use Python's shortest round-trip repr, which never needs more
    than 17 significant digits.
    """
    return json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(to_json(obj) + "\n", encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
