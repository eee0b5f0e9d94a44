"""Haar system: values, transform, reconstruction, and basic identities."""
import numpy as np
import pytest

from mwsf.grid import CellField, DyadicCube, GridError, GridSpec, cube_cells, lp_norm
from mwsf.haar import (
    HaarCoefficients,
    HaarSignature,
    child_sign,
    haar_transform,
    haar_value,
    random_field,
    reconstruct,
    signatures,
)

from reference import naive_haar_coefficient, naive_haar_value


def test_signature_count():
    assert len(signatures(1)) == 1
    assert len(signatures(2)) == 3
    assert len(signatures(3)) == 7


def test_signature_validation():
    cube = DyadicCube(0, (0, 0))
    with pytest.raises(GridError):
        HaarSignature(cube, (0, 0))
    with pytest.raises(GridError):
        HaarSignature(cube, (1,))


def test_child_sign_product_rule():
    assert child_sign((1, 0), (1, 1)) == -1
    assert child_sign((1, 1), (1, 1)) == 1
    assert child_sign((0, 1), (1, 0)) == 1


def test_haar_value_1d_top():
    grid = GridSpec(1, 1)
    h = HaarSignature(grid.top(), (1,))
    assert haar_value(grid, h, DyadicCube(1, (0,))) == pytest.approx(1.0)
    assert haar_value(grid, h, DyadicCube(1, (1,))) == pytest.approx(-1.0)


def test_haar_value_matches_geometry_oracle():
    grid = GridSpec(2, 2)
    for cube in grid.all_cubes(max_level=grid.N - 1):
        for sigma in signatures(grid.d):
            h = HaarSignature(cube, sigma)
            for cell in grid.cubes(grid.N):
                flat = int(cube_cells(grid, cell)[0])
                if cube.contains(cell):
                    assert haar_value(grid, h, cell) == pytest.approx(
                        naive_haar_value(grid, cube, sigma, flat)
                    )
                else:
                    with pytest.raises(GridError):
                        haar_value(grid, h, cell)


def test_transform_simple_example():
    # d=1, N=1, f = (1, 0): top average 0.5, single coefficient 0.5
    grid = GridSpec(1, 1)
    f = CellField(grid, np.array([1.0, 0.0]))
    coeffs = haar_transform(f)
    assert coeffs.top_average == pytest.approx(0.5)
    h = HaarSignature(grid.top(), (1,))
    assert coeffs[h] == pytest.approx(0.5)


def test_transform_matches_naive_coefficients():
    grid = GridSpec(2, 2, 2)
    rng = np.random.default_rng(7)
    f = CellField(grid, rng.standard_normal((grid.num_cells, 2)))
    coeffs = haar_transform(f)
    for cube in grid.all_cubes(max_level=grid.N - 1):
        for sigma in signatures(grid.d):
            expected = naive_haar_coefficient(f, cube, sigma)
            got = coeffs[HaarSignature(cube, sigma)]
            assert np.allclose(got, expected, atol=1e-12)


@pytest.mark.parametrize("d,N,kind", [(1, 3, "scalar"), (1, 4, "vector"),
                                      (2, 2, "vector"), (2, 3, "scalar")])
def test_round_trip(d, N, kind):
    grid = GridSpec(d, N, 2)
    rng = np.random.default_rng(11)
    f = random_field(grid, rng, kind=kind)
    rec = reconstruct(haar_transform(f))
    assert np.abs(rec.values - f.values).max() < 1e-12


def test_parseval():
    grid = GridSpec(2, 3, 2)
    rng = np.random.default_rng(3)
    f = random_field(grid, rng)
    coeffs = haar_transform(f)
    energy = float(np.sum(np.square(coeffs.top_average)))
    energy += sum(float(np.sum(np.square(np.atleast_1d(v)))) for _, v in coeffs.items())
    assert energy == pytest.approx(lp_norm(f, 2.0) ** 2, rel=1e-12)


def test_mean_zero_and_child_constancy():
    grid = GridSpec(2, 2)
    for cube in grid.all_cubes(max_level=grid.N - 1):
        for sigma in signatures(grid.d):
            h = HaarSignature(cube, sigma)
            vals = np.zeros(grid.num_cells)
            for cell in grid.cubes(grid.N):
                if cube.contains(cell):
                    vals[cube_cells(grid, cell)[0]] = haar_value(grid, h, cell)
            assert abs(vals.sum() * grid.cell_measure) < 1e-14
            for child in cube.children():
                block = vals[cube_cells(grid, child)]
                assert np.ptp(block) == 0.0


def test_random_field_deterministic():
    grid = GridSpec(1, 4, 2)
    a = random_field(grid, np.random.default_rng(5))
    b = random_field(grid, np.random.default_rng(5))
    assert np.array_equal(a.values, b.values)
