"""Output formats: plain-text grids, binary PGM bitmaps, CSV tables, JSON."""

from __future__ import annotations

import csv
import json
import os
from fractions import Fraction

import numpy as np


def grid_text(lo, grid) -> str:
    """Rows from the top (largest last coordinate) down; '+' and '-' per spin."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("text grids are two-dimensional")
    lines = [f"# lo {int(lo[0])} {int(lo[1])} shape {grid.shape[0]} {grid.shape[1]}"]
    for y in range(grid.shape[1] - 1, -1, -1):
        lines.append("".join("+" if v > 0 else "-" for v in grid[:, y]))
    return "\n".join(lines) + "\n"


def parse_grid_text(text: str):
    lines = [l for l in text.splitlines() if l.strip()]
    head = lines[0].split()
    lo = (int(head[2]), int(head[3]))
    rows = lines[1:]
    grid = np.array([[1 if c == "+" else -1 for c in row] for row in rows[::-1]], dtype=np.int8).T
    return lo, grid


def pgm_bytes(grid) -> bytes:
    """P5 bitmap, maxval 255; +1 white, -1 black; top row = largest y."""
    grid = np.asarray(grid)
    img = np.where(grid > 0, 255, 0).astype(np.uint8).T[::-1]
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(x) for x in parts[1].split())
    img = np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
    return np.where(img[::-1].T > 127, 1, -1).astype(np.int8)


def _plain(o):
    if isinstance(o, Fraction):
        return str(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_plain) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json_text(obj))


def write_csv(path, header, rows):
    """RFC 4180: CRLF line ends, minimal quoting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])


def _cell(x):
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, bool):
        return "true" if x else "false"
    return x


def write_bytes(path, data: bytes):
    with open(path, "wb") as fh:
        fh.write(data)


def write_text(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
