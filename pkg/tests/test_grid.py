"""Grid, cube, and cell-field basics."""
import numpy as np
import pytest

from mwsf.grid import (
    CellField,
    DyadicCube,
    GridError,
    GridSpec,
    average,
    constant_field,
    cube_cells,
    cube_lattice_slices,
    integral,
    lp_norm,
    pointwise_norm,
    weighted_lp_norm,
)
from mwsf.weights import MatrixWeightField


def test_grid_spec_counts():
    grid = GridSpec(2, 3, 2)
    assert grid.cells_per_side == 8
    assert grid.num_cells == 64
    assert grid.cell_measure == pytest.approx(1.0 / 64)


@pytest.mark.parametrize("d,N,n", [(0, 1, 1), (1, -1, 1), (1, 1, 0), (2, 13, 1)])
def test_grid_spec_rejects_bad_parameters(d, N, n):
    with pytest.raises(GridError):
        GridSpec(d, N, n)


def test_cube_relations():
    top = DyadicCube(0, (0, 0))
    kids = list(top.children())
    assert len(kids) == 4
    assert all(k.parent() == top for k in kids)
    assert all(top.contains(k) for k in kids)
    assert not kids[0].contains(kids[1])
    deep = DyadicCube(3, (5, 2))
    assert deep.ancestor(1) == DyadicCube(1, (1, 0))
    assert deep.measure == pytest.approx(2.0 ** -6)


def test_cube_rejects_out_of_range_index():
    with pytest.raises(GridError):
        DyadicCube(1, (2,))


def test_cube_cells_partition_each_level():
    grid = GridSpec(2, 3)
    for level in range(grid.N + 1):
        seen = np.concatenate([cube_cells(grid, c) for c in grid.cubes(level)])
        assert sorted(seen.tolist()) == list(range(grid.num_cells))


def test_cube_cells_match_lattice_slices():
    grid = GridSpec(2, 3)
    flat = np.arange(grid.num_cells)
    lat = flat.reshape((grid.cells_per_side,) * grid.d)
    for cube in grid.all_cubes():
        via_slices = lat[cube_lattice_slices(grid, cube)].ravel()
        assert np.array_equal(np.sort(cube_cells(grid, cube)), np.sort(via_slices))


def test_cell_field_kind_detection():
    grid = GridSpec(1, 2, 2)
    assert CellField(grid, np.zeros(4)).kind == "scalar"
    assert CellField(grid, np.zeros((4, 2))).kind == "vector"
    assert CellField(grid, np.zeros((4, 2, 2))).kind == "matrix"
    with pytest.raises(GridError):
        CellField(grid, np.zeros(5))


def test_average_and_integral_are_exact():
    grid = GridSpec(1, 2)
    f = CellField(grid, np.array([1.0, 2.0, 3.0, 4.0]))
    top = grid.top()
    assert average(f, top) == pytest.approx(2.5)
    assert integral(f, top) == pytest.approx(2.5 / 4 * 4)
    left = DyadicCube(1, (0,))
    assert average(f, left) == pytest.approx(1.5)
    assert integral(f, left) == pytest.approx(1.5 * 0.5)


def test_constant_field_vector():
    grid = GridSpec(1, 1, 2)
    f = constant_field(grid, np.array([1.0, -2.0]))
    assert f.kind == "vector"
    assert np.allclose(pointwise_norm(f), np.sqrt(5.0))


def test_lp_norm_against_direct_sum():
    grid = GridSpec(2, 2, 2)
    rng = np.random.default_rng(0)
    f = CellField(grid, rng.standard_normal((grid.num_cells, 2)))
    for p in (1.5, 2.0, 3.0):
        direct = (np.sum(np.linalg.norm(f.values, axis=1) ** p) * grid.cell_measure) ** (1 / p)
        assert lp_norm(f, p) == pytest.approx(direct, rel=1e-12)


def test_weighted_lp_norm_identity_weight_collapses():
    grid = GridSpec(1, 3, 2)
    rng = np.random.default_rng(1)
    f = CellField(grid, rng.standard_normal((grid.num_cells, 2)))
    V = MatrixWeightField.identity(grid)
    for p in (1.25, 2.0, 3.0):
        assert weighted_lp_norm(f, V, p) == pytest.approx(lp_norm(f, p), rel=1e-12)


def test_cell_centers_flat_order():
    grid = GridSpec(2, 1)
    centers = grid.cell_centers()
    # row-major: first coordinate slowest
    assert np.allclose(
        centers, [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]]
    )
