"""Deterministic artifact writers: CSV at 17 significant digits, sorted JSON."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x + 0.0, ".17g")  # folds -0.0 into 0


def write_csv(path: Path, columns: Mapping[str, Sequence]) -> Path:
    """Write equal-length columns; header order follows the mapping."""
    names = list(columns)
    cols = [list(columns[n]) for n in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns differ in length")
    lines = [",".join(names)]
    lines += [",".join(fmt(c[i]) for c in cols) for i in range(n)]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_rows(path: Path, rows: Sequence[Mapping]) -> Path:
    if not rows:
        Path(path).write_text("", encoding="utf-8")
        return Path(path)
    return write_csv(path, {k: [r[k] for r in rows] for k in rows[0]})


def _column(values: list[str]) -> np.ndarray:
    if all(v in ("true", "false") for v in values):
        return np.array([v == "true" for v in values])
    try:
        return np.array([float(v) if v else math.nan for v in values])
    except ValueError:
        return np.array(values)


def read_csv(path: Path) -> dict[str, np.ndarray]:
    """Numeric columns as float arrays, flags as bool, anything else as str."""
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    names = lines[0].split(",")
    cells = [line.split(",") for line in lines[1:]]
    return {n: _column([row[i] for row in cells]) for i, n in enumerate(names)}


def jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
