"""Bit-stable serialization of reports, fields and states.

Floats are written with 17 significant digits so that identical numbers give
identical bytes and parse back exactly.  Non-finite floats become JSON null.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import IoError
from .grid import ScalarField
from .state import HybridDensity


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _to_json(obj, indent: int, level: int) -> str:
    pad, inner = " " * (indent * level), " " * (indent * (level + 1))
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if np.isfinite(obj) else "null"
    if isinstance(obj, str):
        return _json_str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{_json_str(str(k))}: {_to_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) for v in seq):
            return "[" + ", ".join(_to_json(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + _to_json(v, indent, level + 1) for v in seq) + "\n" + pad + "]"
    if hasattr(obj, "to_dict"):
        return _to_json(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _json_str(s: str) -> str:
    return json.dumps(s)


def to_json(obj, indent: int = 2) -> str:
    return _to_json(obj, indent, 0) + "\n"


def field_csv(f: ScalarField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "p", "value"])
    X, P = f.grid.mesh
    v = np.asarray(f.values).real
    for x, p, val in zip(X.ravel(), P.ravel(), v.ravel()):
        w.writerow([fmt_float(x), fmt_float(p), fmt_float(val)])
    return buf.getvalue()


def state_csv(h: HybridDensity) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "p", "row", "col", "re", "im"])
    X, P = h.grid.mesh
    d = h.dim
    for (i, j), x in np.ndenumerate(X):
        p = P[i, j]
        for s in range(d):
            for t in range(d):
                z = h.values[i, j, s, t]
                w.writerow([fmt_float(x), fmt_float(p), s, t, fmt_float(z.real), fmt_float(z.imag)])
    return buf.getvalue()


def rows_csv(header, rows) -> str:
    """Generic table; an empty row list still produces the header."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for r in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def render(obj, fmt: str) -> str:
    if fmt == "json":
        return to_json(obj)
    if fmt == "csv":
        if isinstance(obj, ScalarField):
            return field_csv(obj)
        if isinstance(obj, HybridDensity):
            return state_csv(obj)
        raise TypeError("CSV output supports scalar fields and hybrid states")
    raise ValueError(f"unknown format {fmt!r}")


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def emit(obj, fmt: str, path: str | Path) -> None:
    write_atomic(path, render(obj, fmt))


def write_all(files: dict, out_dir: str | Path) -> list:
    """Write {name: text} only after every text has been produced."""
    out = Path(out_dir)
    written = []
    for name in sorted(files):
        write_atomic(out / name, files[name])
        written.append(str(out / name))
    return written
