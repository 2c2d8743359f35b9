"""Grid-table and CSV serialisation, with atomic file writes.

Grid-table layout (text)::

    # plma grid-table
    # bounds <x_min> <x_max> <y_min> <y_max>
    # shape <n1> <n2>
    # channels value[ mask]
    <n1 lines of n2 values, row i = first index>
    [<n1 lines of n2 0/1 mask flags>]

Numbers are written with 17 significant digits so a round trip is exact.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import Grid, GridFunction

FLOAT_FMT = "%.17g"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % float(x)
    return str(x)


def write_atomic(path, text: str) -> Path:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dumps_table(u: GridFunction) -> str:
    g = u.grid
    lines = [
        "# plma grid-table",
        "# bounds " + " ".join(fmt(float(v)) for v in (g.x_min, g.x_max, g.y_min, g.y_max)),
        f"# shape {g.n1} {g.n2}",
        "# channels value" + (" mask" if u.mask is not None else ""),
    ]
    for row in u.values:
        lines.append(" ".join(FLOAT_FMT % v for v in row))
    if u.mask is not None:
        for row in u.mask:
            lines.append(" ".join("1" if v else "0" for v in row))
    return "\n".join(lines) + "\n"


def loads_table(text: str) -> GridFunction:
    header = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] in ("bounds", "shape", "channels"):
                header[parts[0]] = parts[1:]
        elif line.strip():
            body.append(line.split())
    try:
        x_min, x_max, y_min, y_max = map(float, header["bounds"])
        n1, n2 = map(int, header["shape"])
        channels = header["channels"]
    except KeyError as exc:
        raise ValueError(f"grid-table header missing {exc}") from None
    grid = Grid(x_min, x_max, y_min, y_max, n1, n2)
    values = np.array([[float(v) for v in row] for row in body[:n1]])
    mask = None
    if "mask" in channels:
        mask = np.array([[v == "1" for v in row] for row in body[n1:2 * n1]], dtype=bool)
    return GridFunction(grid, values, mask)


def save_table(u: GridFunction, path) -> Path:
    return write_atomic(path, dumps_table(u))


def load_table(path) -> GridFunction:
    return loads_table(Path(path).read_text())


def dumps_csv(u: GridFunction, extra: dict | None = None) -> str:
    """Long-format CSV: ``i, j, x1, x2, value`` (+ ``mask``, + extra channels)."""
    extra = extra or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["i", "j", "x1", "x2", "value"]
    if u.mask is not None:
        cols.append("mask")
    cols.extend(extra)
    w.writerow(cols)
    x1, x2 = u.grid.x1, u.grid.x2
    for i in range(u.grid.n1):
        for j in range(u.grid.n2):
            row = [i, j, fmt(x1[i]), fmt(x2[j]), fmt(u.values[i, j])]
            if u.mask is not None:
                row.append(int(u.mask[i, j]))
            row.extend(fmt(ch[i, j]) for ch in extra.values())
            w.writerow(row)
    return buf.getvalue()


def save_csv(u: GridFunction, path, extra: dict | None = None) -> Path:
    return write_atomic(path, dumps_csv(u, extra))


def dumps_records(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()
