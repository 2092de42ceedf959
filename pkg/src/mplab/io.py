"""Reading and writing function files, traces and JSON reports.

Function files are CSV with a ``# domain: <shape> <n> <extent>`` header and
one row ``index,x[,y],value`` per interior node (boundary nodes are implicit
zeros).  Floats are written with 17 significant digits, so a file read and
written again is byte-identical.  All writes go through a temporary file in
the target directory followed by an atomic rename.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .grid import GridDomain, GridFunction, build_domain

__all__ = ["atomic_write", "format_function", "write_function", "read_function", "write_trace", "write_json",
           "read_json", "to_jsonable"]


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g(x: float) -> str:
    return "%.17g" % x


def format_function(u: GridFunction) -> str:
    dom = u.domain
    lines = [f"# domain: {dom.shape} {dom.n} {dom.extent!r}"]
    pts = dom.points
    for k in range(dom.m):
        coords = ",".join(_g(c) for c in pts[k])
        lines.append(f"{int(dom.interior[k])},{coords},{_g(u.values[k])}")
    return "\n".join(lines) + "\n"


def write_function(path: str | Path, u: GridFunction) -> None:
    atomic_write(path, format_function(u))


def read_function(path: str | Path) -> GridFunction:
    """Inverse of :func:`write_function`; every interior node must be listed once."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# domain:"):
        raise ConfigError(f"{path}: line 1: missing '# domain: <shape> <n> <extent>' header")
    parts = lines[0][len("# domain:"):].split()
    if len(parts) != 3:
        raise ConfigError(f"{path}: line 1: header needs shape, n and extent")
    try:
        dom = build_domain(parts[0], int(parts[1]), float(parts[2]))
    except (ValueError, DomainError) as exc:
        raise ConfigError(f"{path}: line 1: {exc}") from exc
    values = np.full(dom.m, np.nan)
    ncols = dom.dimension + 2
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split(",")
        if len(cols) != ncols:
            raise ConfigError(f"{path}: line {lineno}: expected {ncols} columns, got {len(cols)}")
        try:
            full, val = int(cols[0]), float(cols[-1])
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
        k = dom.full_to_interior[full] if 0 <= full < dom.full_to_interior.size else -1
        if k < 0:
            raise ConfigError(f"{path}: line {lineno}: index {full} is not an interior node")
        if not math.isnan(values[k]):
            raise ConfigError(f"{path}: line {lineno}: node {full} listed twice")
        values[k] = val
    missing = np.flatnonzero(np.isnan(values))
    if missing.size:
        raise ConfigError(f"{path}: {missing.size} interior nodes missing (first: {int(dom.interior[missing[0]])})")
    return GridFunction(dom, values, copy=False)


def write_trace(path: str | Path, rows: list[dict], columns: list[str]) -> None:
    out = [",".join(columns)]
    for r in rows:
        out.append(",".join(_g(r[c]) if isinstance(r[c], float) else str(r[c]) for c in columns))
    atomic_write(path, "\n".join(out) + "\n")


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path: str | Path, obj) -> None:
    atomic_write(path, json.dumps(to_jsonable(obj), indent=2) + "\n")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def domain_from_dict(d: dict) -> GridDomain:
    return build_domain(d["shape"], d["n"], d["extent"])
