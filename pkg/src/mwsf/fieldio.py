"""Field file format: text with a `d N n kind` header, one cell per line,
or raw little-endian float64 binary with a sidecar header file."""
from __future__ import annotations

import os

import numpy as np

from .grid import CellField, GridError, GridSpec

KINDS = ("scalar", "vector", "matrix")


def _values_per_cell(n: int, kind: str) -> int:
    return {"scalar": 1, "vector": n, "matrix": n * n}[kind]


def _shape(grid: GridSpec, kind: str):
    if kind == "scalar":
        return (grid.num_cells,)
    if kind == "vector":
        return (grid.num_cells, grid.n)
    return (grid.num_cells, grid.n, grid.n)


def write_field(path: str, f: CellField) -> None:
    grid = f.grid
    flat = f.values.reshape(grid.num_cells, -1)
    with open(path, "w") as fh:
        fh.write(f"{grid.d} {grid.N} {grid.n} {f.kind}\n")
        for row in flat:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def _parse_header(line: str):
    parts = line.split()
    if len(parts) != 4:
        raise GridError(f"malformed field header: {line!r}")
    d, N, n, kind = int(parts[0]), int(parts[1]), int(parts[2]), parts[3]
    if kind not in KINDS:
        raise GridError(f"unknown field kind {kind!r}")
    return GridSpec(d, N, n), kind


def read_field(path: str) -> CellField:
    with open(path) as fh:
        grid, kind = _parse_header(fh.readline())
        vals = np.loadtxt(fh, ndmin=2)
    expect = _values_per_cell(grid.n, kind)
    if vals.shape != (grid.num_cells, expect):
        raise GridError(
            f"field body shape {vals.shape} does not match header "
            f"({grid.num_cells} cells x {expect} values)"
        )
    return CellField(grid, vals.reshape(_shape(grid, kind)))


def write_field_binary(path: str, f: CellField) -> None:
    """Raw little-endian float64 payload plus `<path>.hdr` sidecar."""
    grid = f.grid
    f.values.astype("<f8").tofile(path)
    with open(path + ".hdr", "w") as fh:
        fh.write(f"{grid.d} {grid.N} {grid.n} {f.kind}\n")


def read_field_binary(path: str) -> CellField:
    hdr = path + ".hdr"
    if not os.path.exists(hdr):
        raise GridError(f"missing sidecar header {hdr}")
    with open(hdr) as fh:
        grid, kind = _parse_header(fh.readline())
    raw = np.fromfile(path, dtype="<f8")
    expect = grid.num_cells * _values_per_cell(grid.n, kind)
    if raw.size != expect:
        raise GridError(f"binary payload has {raw.size} values, expected {expect}")
    return CellField(grid, raw.reshape(_shape(grid, kind)))
