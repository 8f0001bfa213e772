"""File formats: signal CSV, PGM images, edge lists, dense dumps and solutions."""

from __future__ import annotations

import csv
import os

import numpy as np

from .dual import Problem, format_float, make_problem
from .exceptions import ConfigError, ParseError
from .losses import SquaredLoss
from .operators import GraphSpec, LinearOperator, build_graph_diff, grid_graph

PGM_MAGIC = (b"P2", b"P5")


def _infer_format(path, fmt):
    if fmt:
        fmt = fmt.lower()
        if fmt not in ("csv", "pgm"):
            raise ConfigError(f"unknown signal format {fmt!r}")
        return fmt
    return "pgm" if os.fspath(path).lower().endswith(".pgm") else "csv"


def load_signal(path, fmt=None):
    """Read a data vector. Returns ``(y, dims)``; ``dims`` is ``(h, w)`` for PGM, else ``None``.

    CSV holds one value per line; a non-numeric first line is taken as a
    header. PGM (P2 or P5, maxval up to 65535) is scaled to ``[0, 1]`` and
    flattened row-major.
    """
    if _infer_format(path, fmt) == "pgm":
        return read_pgm(path)
    return _read_csv_column(path), None


def _read_csv_column(path):
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ParseError(f"not a number: {text!r}", path=path, line=lineno) from None
    if not values:
        raise ParseError("no numeric values", path=path)
    y = np.array(values)
    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.isfinite(y))[0])
        raise ParseError("non-finite value", path=path, line=bad + 1)
    return y


class _PgmTokens:
    def __init__(self, data, path):
        self.data, self.path, self.pos = data, path, 0

    def _skip(self):
        d = self.data
        while self.pos < len(d):
            c = d[self.pos:self.pos + 1]
            if c == b"#":
                while self.pos < len(d) and d[self.pos:self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            elif c.isspace():
                self.pos += 1
            else:
                return

    def next(self, what):
        self._skip()
        start = self.pos
        while self.pos < len(self.data) and not self.data[self.pos:self.pos + 1].isspace():
            if self.data[self.pos:self.pos + 1] == b"#":
                break
            self.pos += 1
        tok = self.data[start:self.pos]
        if not tok:
            raise ParseError(f"unexpected end of file while reading {what}", path=self.path, offset=start)
        return tok, start

    def next_int(self, what):
        tok, start = self.next(what)
        if not tok.isdigit():
            raise ParseError(f"bad {what}: {tok[:20]!r}", path=self.path, offset=start)
        return int(tok)


def read_pgm(path):
    """Parse a P2 or P5 PGM. Returns ``(values in [0, 1], (h, w))``."""
    with open(path, "rb") as fh:
        data = fh.read()
    tk = _PgmTokens(data, path)
    magic, _ = tk.next("magic number")
    if magic not in PGM_MAGIC:
        raise ParseError(f"not a PGM file (magic {magic[:4]!r})", path=path, offset=0)
    w = tk.next_int("width")
    h = tk.next_int("height")
    maxval = tk.next_int("maxval")
    if w < 1 or h < 1:
        raise ParseError("image dimensions must be positive", path=path)
    if not 1 <= maxval <= 65535:
        raise ParseError(f"maxval {maxval} outside [1, 65535]", path=path)
    count = w * h
    if magic == b"P2":
        vals = np.array([tk.next_int("pixel") for _ in range(count)], dtype=float)
    else:
        start = tk.pos + 1  # exactly one whitespace byte after maxval
        width = 1 if maxval < 256 else 2
        raw = data[start:start + width * count]
        if len(raw) < width * count:
            raise ParseError(
                f"truncated raster: expected {width * count} bytes, found {len(raw)}",
                path=path,
                offset=start + len(raw),
            )
        vals = np.frombuffer(raw, dtype=np.uint8 if width == 1 else ">u2").astype(float)
    if vals.max(initial=0) > maxval:
        raise ParseError(f"pixel value exceeds maxval {maxval}", path=path)
    return vals / maxval, (h, w)


def write_pgm(path, values, dims, maxval=255):
    """Binary (P5) render of ``values`` clamped to ``[0, 1]``."""
    h, w = dims
    v = np.clip(np.asarray(values, dtype=float).reshape(h, w), 0.0, 1.0)
    pix = np.rint(v * maxval).astype(np.uint8 if maxval < 256 else ">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_edge_list(path, n_vertices=None):
    """Parse ``u v [w]`` lines (1-indexed, ``#`` comments) into a :class:`GraphSpec`.

    Edges given as ``v u`` with ``v > u`` are stored as ``(u, v)``. Missing
    weights default to 1. ``n_vertices`` defaults to the largest index seen.
    """
    edges, weights = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].split()
            if not text:
                continue
            if len(text) not in (2, 3):
                raise ParseError("expected 'u v [w]'", path=path, line=lineno)
            try:
                u, v = int(text[0]), int(text[1])
                wt = float(text[2]) if len(text) == 3 else 1.0
            except ValueError:
                raise ParseError(f"bad edge line {raw.strip()!r}", path=path, line=lineno) from None
            if u == v:
                raise ParseError(f"self-loop at vertex {u}", path=path, line=lineno)
            if min(u, v) < 1:
                raise ParseError("vertex indices are 1-based", path=path, line=lineno)
            edges.append((min(u, v), max(u, v)))
            weights.append(wt)
    if not edges:
        raise ParseError("edge list is empty", path=path)
    n = max(v for _, v in edges) if n_vertices is None else n_vertices
    all_unit = all(wt == 1.0 for wt in weights)
    return GraphSpec(n, tuple(edges), None if all_unit else tuple(weights))


def write_dense_csv(path, op: LinearOperator):
    """Row-major CSV dump of a (small) operator, for debugging."""
    dense = op.to_dense()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in dense:
            w.writerow([format_float(x) for x in row])


def write_solution(path, beta):
    """One value per line at full double precision (readable by :func:`load_signal`)."""
    with open(path, "w") as fh:
        for x in np.asarray(beta, dtype=float).ravel():
            fh.write(format_float(x) + "\n")


def load_points(path):
    """Rows of comma-separated coordinates (header tolerated) as an ``(n, p)`` array."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                rows.append([float(x) for x in text.split(",")])
            except ValueError:
                if lineno == 1:
                    continue
                raise ParseError(f"bad point row {text!r}", path=path, line=lineno) from None
    if not rows:
        raise ParseError("no points", path=path)
    if len({len(r) for r in rows}) != 1:
        raise ParseError("rows have differing lengths", path=path)
    return np.array(rows)


def build_image_problem(y, dims, k, lam, sigma=None) -> Problem:
    """Graph trend filtering of order ``k`` on the 4-neighbour grid of an image."""
    h, w = dims
    y = np.asarray(y, dtype=float).ravel()
    if h * w != y.size:
        raise ConfigError(f"image of {h}x{w} pixels needs {h * w} values, got {y.size}")
    op = build_graph_diff(grid_graph(h, w), k)
    return make_problem(SquaredLoss(y), op, lam, sigma=sigma)
