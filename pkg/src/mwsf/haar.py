"""Tensor-product Haar system on the dyadic grid.

For a cube J and a nonzero signature sigma in {0,1}^d, the Haar function is
the product of 1D Haar factors (sigma_i = 1) and normalized indicators
(sigma_i = 0), L^2-normalized: its value on any finest cell inside J is
+/- measure(J)^{-1/2} with the sign given by the product of half-indicator
signs over the active coordinates.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import CellField, DyadicCube, GridError, GridSpec, cube_cells


def signatures(d: int):
    """The 2^d - 1 nonzero signatures, in fixed lexicographic order."""
    return [s for s in itertools.product((0, 1), repeat=d) if any(s)]


@dataclass(frozen=True)
class HaarSignature:
    cube: DyadicCube
    sigma: tuple

    def __post_init__(self):
        if len(self.sigma) != self.cube.d or not any(self.sigma):
            raise GridError(f"invalid signature {self.sigma} for cube {self.cube}")


def child_sign(sigma, offsets) -> int:
    """Sign of the Haar function on the child with the given 0/1 offsets."""
    s = 1
    for sig, off in zip(sigma, offsets):
        if sig and off:
            s = -s
    return s


def haar_value(grid: GridSpec, h: HaarSignature, cell: DyadicCube) -> float:
    """Value of the Haar function on a finest cell contained in its cube."""
    if cell.level != grid.N:
        raise GridError("haar_value expects a cell at the finest level")
    if not h.cube.contains(cell):
        raise GridError(f"cell {cell} outside Haar cube {h.cube}")
    if h.cube.level == grid.N:
        raise GridError("cells at the finest level carry no Haar functions")
    shift = grid.N - h.cube.level - 1
    offsets = tuple((k >> shift) & 1 for k in cell.index)
    return child_sign(h.sigma, offsets) * h.cube.measure ** -0.5


class HaarCoefficients:
    """Haar coefficients of a field plus its top-level average."""

    def __init__(self, grid: GridSpec, top_average, coeffs: dict):
        self.grid = grid
        self.top_average = np.asarray(top_average, dtype=float)
        self.coeffs = coeffs

    def __getitem__(self, h: HaarSignature):
        return self.coeffs[h]

    def get(self, h: HaarSignature, default=None):
        return self.coeffs.get(h, default)

    def items(self):
        return self.coeffs.items()

    def __len__(self):
        return len(self.coeffs)


def _level_integrals(f: CellField):
    """Integral of f over every cube, as lattice arrays per level."""
    grid = f.grid
    out = [None] * (grid.N + 1)
    arr = f.lattice() * grid.cell_measure
    out[grid.N] = arr
    for level in range(grid.N - 1, -1, -1):
        for axis in range(grid.d):
            m = arr.shape[axis]
            shape = arr.shape[:axis] + (m // 2, 2) + arr.shape[axis + 1:]
            arr = arr.reshape(shape).sum(axis=axis + 1)
        out[level] = arr
    return out


def haar_transform(f: CellField) -> HaarCoefficients:
    """Exact Haar coefficients f_J^sigma = sum_{cells in J} f * h * |cell|."""
    grid = f.grid
    integrals = _level_integrals(f)
    if f.kind == "scalar":
        top_average = float(integrals[0].reshape(-1)[0])
    else:
        top_average = integrals[0].reshape(f.values.shape[1:])
    coeffs = {}
    sigs = signatures(grid.d)
    for level in range(grid.N):
        child_int = integrals[level + 1]
        norm = DyadicCube(level, (0,) * grid.d).measure ** -0.5
        for cube in grid.cubes(level):
            base = tuple(2 * k for k in cube.index)
            for sigma in sigs:
                acc = None
                for offs in itertools.product((0, 1), repeat=grid.d):
                    idx = tuple(b + o for b, o in zip(base, offs))
                    term = child_sign(sigma, offs) * child_int[idx]
                    acc = term if acc is None else acc + term
                coeffs[HaarSignature(cube, sigma)] = acc * norm
    return HaarCoefficients(grid, top_average, coeffs)


def reconstruct(coeffs: HaarCoefficients) -> CellField:
    """Invert the Haar transform exactly (up to floating roundoff)."""
    grid = coeffs.grid
    top = np.asarray(coeffs.top_average, dtype=float)
    shape = (grid.num_cells,) + top.shape
    values = np.broadcast_to(top, shape).copy()
    for h, vec in coeffs.items():
        norm = h.cube.measure ** -0.5
        for offs, child in zip(
            itertools.product((0, 1), repeat=grid.d), h.cube.children()
        ):
            s = child_sign(h.sigma, offs) * norm
            values[cube_cells(grid, child)] += s * np.asarray(vec)
    return CellField(grid, values)


def random_field(grid: GridSpec, rng, decay: float = 0.7, amplitude: float = 1.0,
                 kind: str = "vector") -> CellField:
    """Random field from Haar coefficients with geometric level decay."""
    vshape = () if kind == "scalar" else (grid.n,)
    top = amplitude * rng.standard_normal(vshape)
    coeffs = {}
    for level in range(grid.N):
        amp = amplitude * decay ** (level + 1)
        for cube in grid.cubes(level):
            for sigma in signatures(grid.d):
                coeffs[HaarSignature(cube, sigma)] = amp * rng.standard_normal(vshape)
    if kind == "scalar":
        top = float(top)
        coeffs = {h: float(v) for h, v in coeffs.items()}
    return reconstruct(HaarCoefficients(grid, top, coeffs))
