"""CSV and binary serialisation of grid and space-time fields.

CSV layout: a header row ``x1,...,xm,value`` (``x1,...,xm,t,value`` for
space-time fields), then one row per grid point in row-major order, time
outermost.

Binary layout, all little-endian::

    int64 m, int64 N, int64 node_count      # node_count == 0 -> GridField
    float64 times[node_count]
    float64 values[node_count or 1][N]^m     # row-major
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .torus import FieldError, GridField, SpaceTimeField, TorusGrid

_HEADER = struct.Struct("<qqq")


def _coord_columns(grid: TorusGrid) -> np.ndarray:
    return np.stack([c.ravel() for c in grid.mesh()], axis=1)


def write_csv(path, field: GridField | SpaceTimeField) -> None:
    grid = field.grid
    coords = _coord_columns(grid)
    names = [f"x{i + 1}" for i in range(grid.dim)]
    if isinstance(field, SpaceTimeField):
        blocks = []
        for t, vals in zip(field.times, field.values):
            tcol = np.full((grid.size, 1), t)
            blocks.append(np.hstack([coords, tcol, vals.reshape(-1, 1)]))
        rows = np.vstack(blocks)
        names.append("t")
    else:
        rows = np.hstack([coords, field.values.reshape(-1, 1)])
    names.append("value")
    np.savetxt(path, rows, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def read_csv(path) -> GridField | SpaceTimeField:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    dim = sum(1 for h in header if h.startswith("x"))
    has_t = "t" in header
    if has_t:
        times = np.unique(data[:, dim])
        per_node = data.shape[0] // times.size
    else:
        per_node = data.shape[0]
    n = int(round(per_node ** (1.0 / dim)))
    if n**dim != per_node:
        raise FieldError(f"{per_node} rows is not a full {dim}-d grid")
    grid = TorusGrid(dim, n)
    values = data[:, -1]
    if has_t:
        return SpaceTimeField(grid, times, values.reshape(times.size, *grid.shape))
    return GridField(grid, values)


def write_binary(path, field: GridField | SpaceTimeField) -> None:
    grid = field.grid
    times = field.times if isinstance(field, SpaceTimeField) else np.empty(0)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(grid.dim, grid.n, times.size))
        fh.write(np.ascontiguousarray(times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_binary(path) -> GridField | SpaceTimeField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FieldError("binary field file is shorter than its header")
    dim, n, nodes = _HEADER.unpack_from(raw)
    offset = _HEADER.size
    times = np.frombuffer(raw, dtype="<f8", count=nodes, offset=offset)
    offset += 8 * nodes
    grid = TorusGrid(int(dim), int(n))
    count = max(nodes, 1) * grid.size
    if offset + 8 * count != len(raw):
        raise FieldError("binary field file has trailing or missing bytes")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(float)
    if nodes:
        return SpaceTimeField(grid, times.copy(), values.reshape(nodes, *grid.shape))
    return GridField(grid, values.reshape(grid.shape))


def write_field(path, field) -> None:
    """Dispatch on suffix: ``.csv`` or anything else as binary."""
    if str(path).endswith(".csv"):
        write_csv(path, field)
    else:
        write_binary(path, field)


def read_field(path):
    if str(path).endswith(".csv"):
        return read_csv(path)
    return read_binary(path)
