"""Deterministic JSON emission and map files."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .sphere import RationalMap

__all__ = ["dumps", "write_json", "load_map", "point"]


def point(z):
    """[re, im] for finite points, "inf" for infinity."""
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        return "inf"
    return [z.real, z.imag]


def _float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _emit(obj, indent: int, level: int, out: list[str]) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_float(float(obj)))
    elif isinstance(obj, (complex, np.complexfloating)):
        _emit(point(obj), indent, level, out)
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(str(k))}: ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj.tolist() if isinstance(obj, np.ndarray) else obj)
        if not items:
            out.append("[]")
            return
        if all(isinstance(x, (int, float, str, bool, np.number)) or x is None for x in items):
            out.append("[")
            for i, x in enumerate(items):
                _emit(x, indent, level, out)
                if i < len(items) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for i, x in enumerate(items):
            out.append(pad)
            _emit(x, indent, level + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits, so equal inputs give equal bytes."""
    out: list[str] = []
    _emit(obj, indent, 0, out)
    return "".join(out) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def load_map(path) -> RationalMap:
    with open(path, encoding="utf-8") as fh:
        return RationalMap.from_json(json.load(fh))
