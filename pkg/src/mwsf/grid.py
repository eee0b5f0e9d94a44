"""Finite dyadic grid on [0,1)^d with piecewise-constant cell fields.

Everything lives at a fixed finest depth N, so integrals and averages are
exact finite sums over cells: no quadrature tolerance anywhere.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Addressable-memory cap on the number of finest cells.
MAX_CELLS = 2 ** 24


class GridError(ValueError):
    """Invalid grid parameters or cube/grid mismatch."""


@dataclass(frozen=True)
class GridSpec:
    """Dyadic grid on [0,1)^d at depth N carrying R^n valued data.

    Cells are the 2^(N*d) cubes at level N, flat-indexed row-major over the
    lattice (first coordinate slowest).
    """

    d: int
    N: int
    n: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise GridError("dimension d must be positive")
        if self.N < 0:
            raise GridError("depth N must be non-negative")
        if self.n < 1:
            raise GridError("vector dimension n must be positive")
        if 2 ** (self.N * self.d) > MAX_CELLS:
            raise GridError(
                f"2^(N*d) = 2^{self.N * self.d} exceeds the cell cap {MAX_CELLS}"
            )

    @property
    def cells_per_side(self) -> int:
        return 2 ** self.N

    @property
    def num_cells(self) -> int:
        return 2 ** (self.N * self.d)

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.N * self.d)

    def top(self) -> "DyadicCube":
        return DyadicCube(0, (0,) * self.d)

    def cubes(self, level: int):
        """All cubes at one level, lexicographic in the index."""
        if not 0 <= level <= self.N:
            raise GridError(f"level {level} outside 0..{self.N}")
        for idx in itertools.product(range(2 ** level), repeat=self.d):
            yield DyadicCube(level, idx)

    def all_cubes(self, min_level: int = 0, max_level: int | None = None):
        """Every cube of the grid, coarse to fine."""
        top_level = self.N if max_level is None else max_level
        for level in range(min_level, top_level + 1):
            yield from self.cubes(level)

    def cell_centers(self) -> np.ndarray:
        """(num_cells, d) array of cell center coordinates in flat order."""
        m = self.cells_per_side
        axes = [(np.arange(m) + 0.5) / m] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)


@dataclass(frozen=True)
class DyadicCube:
    """Cube 2^-level * ([0,1)^d + index), addressed by (level, index)."""

    level: int
    index: tuple

    def __post_init__(self):
        if self.level < 0:
            raise GridError("cube level must be non-negative")
        for k in self.index:
            if not 0 <= k < 2 ** self.level:
                raise GridError(f"cube index {self.index} invalid at level {self.level}")

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def measure(self) -> float:
        return 2.0 ** (-self.level * self.d)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    def children(self):
        for offs in itertools.product((0, 1), repeat=self.d):
            yield DyadicCube(
                self.level + 1,
                tuple(2 * k + o for k, o in zip(self.index, offs)),
            )

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise GridError("top cube has no parent")
        return DyadicCube(self.level - 1, tuple(k // 2 for k in self.index))

    def contains(self, other: "DyadicCube") -> bool:
        if other.d != self.d or other.level < self.level:
            return False
        shift = other.level - self.level
        return all(ko >> shift == k for ko, k in zip(other.index, self.index))

    def ancestor(self, level: int) -> "DyadicCube":
        if not 0 <= level <= self.level:
            raise GridError(f"no ancestor of level {level}")
        shift = self.level - level
        return DyadicCube(level, tuple(k >> shift for k in self.index))

    def as_tuple(self):
        return (self.level,) + tuple(self.index)


@lru_cache(maxsize=None)
def _cube_cells_cached(N: int, d: int, level: int, index: tuple) -> np.ndarray:
    m = 2 ** N
    s = 2 ** (N - level)
    flat = np.arange(m ** d).reshape((m,) * d)
    slices = tuple(slice(k * s, (k + 1) * s) for k in index)
    out = flat[slices].ravel()
    out.setflags(write=False)
    return out


def cube_cells(grid: GridSpec, cube: DyadicCube) -> np.ndarray:
    """Flat indices of the finest cells contained in a cube."""
    if cube.d != grid.d or cube.level > grid.N:
        raise GridError(f"cube {cube} does not belong to grid {grid}")
    return _cube_cells_cached(grid.N, grid.d, cube.level, tuple(cube.index))


def cube_lattice_slices(grid: GridSpec, cube: DyadicCube):
    """Per-axis slices of the cube's cell block in the lattice view."""
    s = 2 ** (grid.N - cube.level)
    return tuple(slice(k * s, (k + 1) * s) for k in cube.index)


class CellField:
    """Piecewise-constant field at the finest resolution.

    values has shape (num_cells,) for scalars, (num_cells, n) for vectors,
    (num_cells, n, n) for matrices, in flat cell order.
    """

    def __init__(self, grid: GridSpec, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape[0] != grid.num_cells:
            raise GridError(
                f"field has {values.shape[0]} cells, grid has {grid.num_cells}"
            )
        if values.ndim == 1:
            kind = "scalar"
        elif values.ndim == 2 and values.shape[1] == grid.n:
            kind = "vector"
        elif values.ndim == 3 and values.shape[1:] == (grid.n, grid.n):
            kind = "matrix"
        else:
            raise GridError(f"value shape {values.shape} does not match n={grid.n}")
        if not np.all(np.isfinite(values)):
            raise GridError("field contains non-finite entries")
        self.grid = grid
        self.values = values
        self.kind = kind

    def lattice(self) -> np.ndarray:
        m = self.grid.cells_per_side
        return self.values.reshape((m,) * self.grid.d + self.values.shape[1:])

    def copy(self) -> "CellField":
        return CellField(self.grid, self.values.copy())

    def __repr__(self):
        return f"CellField({self.kind}, d={self.grid.d}, N={self.grid.N}, n={self.grid.n})"


def constant_field(grid: GridSpec, value) -> CellField:
    value = np.asarray(value, dtype=float)
    values = np.broadcast_to(value, (grid.num_cells,) + value.shape).copy()
    return CellField(grid, values)


def average(f: CellField, cube: DyadicCube):
    """Exact unweighted average of f over a cube."""
    cells = cube_cells(f.grid, cube)
    return f.values[cells].mean(axis=0)


def integral(f: CellField, cube: DyadicCube):
    """Exact integral of f over a cube."""
    return average(f, cube) * cube.measure


def pointwise_norm(f: CellField) -> np.ndarray:
    """|f(x)| per cell: abs for scalars, Euclidean norm for vectors."""
    if f.kind == "scalar":
        return np.abs(f.values)
    if f.kind == "vector":
        return np.linalg.norm(f.values, axis=1)
    raise GridError("pointwise_norm undefined for matrix fields")


def lp_norm(f: CellField, p: float) -> float:
    """Unweighted L^p norm, exact sum over cells."""
    if p <= 0:
        raise GridError("p must be positive")
    mag = pointwise_norm(f)
    return float((np.sum(mag ** p) * f.grid.cell_measure) ** (1.0 / p))


def weighted_lp_norm(f: CellField, V, p: float) -> float:
    """L^p(V) norm of a vector field: (sum |V^{1/p}(x) f(x)|^p |cell|)^{1/p}.

    V is a matrix weight field exposing .power(t); SPD validation happens on
    its construction.
    """
    if not 1.0 < p < np.inf:
        raise GridError("weighted norms require p in (1, inf)")
    if f.kind != "vector":
        raise GridError("weighted_lp_norm expects a vector field")
    vp = V.power(1.0 / p)
    wf = np.einsum("cij,cj->ci", vp, f.values)
    mag = np.linalg.norm(wf, axis=1)
    return float((np.sum(mag ** p) * f.grid.cell_measure) ** (1.0 / p))
