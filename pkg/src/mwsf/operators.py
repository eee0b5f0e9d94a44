"""Matrix-weighted square function, sparse/Carleson operators, and the
dyadic scalar operators, all exact per cell on the finite grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    CellField,
    DyadicCube,
    GridError,
    GridSpec,
    average,
    cube_cells,
    lp_norm,
    pointwise_norm,
    weighted_lp_norm,
)
from .haar import HaarCoefficients, haar_transform, reconstruct, signatures, HaarSignature
from .weights import MatrixWeightField, ReducingCache, spectral_norms


@dataclass(frozen=True)
class ExponentConfig:
    p: float
    r: float = 2.0

    def __post_init__(self):
        if not 1.0 < self.p < np.inf:
            raise GridError("p must lie in (1, inf)")
        if self.r <= 0:
            raise GridError("r must be positive")

    @property
    def p_prime(self) -> float:
        return self.p / (self.p - 1.0)


class CoefficientField:
    """Nonnegative scalar coefficient profile a_L(x) per cube, supported on L.

    data maps a DyadicCube to an array aligned with cube_cells(grid, L).
    """

    def __init__(self, grid: GridSpec, data: dict):
        for cube, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (len(cube_cells(grid, cube)),):
                raise GridError(f"coefficient array shape mismatch on {cube}")
            if np.any(arr < 0.0):
                raise GridError(f"negative coefficient on {cube}")
            data[cube] = arr
        self.grid = grid
        self.data = data

    def items(self):
        return self.data.items()


def _square_accumulate(U: MatrixWeightField, p: float,
                       coeffs: HaarCoefficients, restrict: DyadicCube | None):
    grid = U.grid
    upow = U.power(1.0 / p)
    acc = np.zeros(grid.num_cells)
    for h, vec in coeffs.items():
        if restrict is not None and not restrict.contains(h.cube):
            continue
        cells = cube_cells(grid, h.cube)
        uv = upow[cells] @ np.asarray(vec, dtype=float)
        acc[cells] += np.sum(uv * uv, axis=1) / h.cube.measure
    return acc


def square_function(U: MatrixWeightField, p: float, f: CellField,
                    coeffs: HaarCoefficients | None = None) -> CellField:
    """Pointwise (sum_{J,sigma} |U^{1/p}(x) f_J^sigma|^2 1_J(x)/|J|)^{1/2}."""
    if f.grid != U.grid:
        raise GridError("field and weight live on different grids")
    if f.kind != "vector":
        raise GridError("square function expects a vector field")
    if coeffs is None:
        coeffs = haar_transform(f)
    return CellField(U.grid, np.sqrt(_square_accumulate(U, p, coeffs, None)))


def localized_square_function(U: MatrixWeightField, p: float, f: CellField,
                              J: DyadicCube,
                              coeffs: HaarCoefficients | None = None) -> CellField:
    """Square function restricted to Haar cubes contained in J."""
    if coeffs is None:
        coeffs = haar_transform(f)
    return CellField(U.grid, np.sqrt(_square_accumulate(U, p, coeffs, J)))


def _family_terms(U: MatrixWeightField, p: float, family, f: CellField,
                  cache: ReducingCache):
    """Per family cube: (cells, average |U_L f|, cell profile ||U^{1/p} U_L^{-1}||)."""
    grid = U.grid
    upow = U.power(1.0 / p)
    for L in family:
        cells = cube_cells(grid, L)
        RL = cache.forward(L)
        mean_rf = float(np.mean(np.linalg.norm(f.values[cells] @ RL.T, axis=1)))
        profile = spectral_norms(upow[cells] @ cache.forward_inv(L))
        yield L, cells, mean_rf, profile


def generalized_sparse_operator(U: MatrixWeightField, p: float, r: float,
                                family, f: CellField,
                                cache: ReducingCache) -> CellField:
    """(sum_{L in family} <|U_L f|>_L^r ||U^{1/p}(x) U_L^{-1}||^r 1_L(x))^{1/r}."""
    if f.grid != U.grid:
        raise GridError("field and weight live on different grids")
    acc = np.zeros(U.grid.num_cells)
    for L, cells, mean_rf, profile in _family_terms(U, p, family, f, cache):
        acc[cells] += (mean_rf * profile) ** r
    return CellField(U.grid, acc ** (1.0 / r))


def sparse_positive_operator(U: MatrixWeightField, p: float, family,
                             f: CellField, cache: ReducingCache) -> CellField:
    """The r = 2 sparse positive operator over a sparse cube family."""
    return generalized_sparse_operator(U, p, 2.0, family, f, cache)


def linear_sparse_domination_check(U: MatrixWeightField, p: float, family,
                                   f: CellField, cache: ReducingCache):
    """Max over cells of sum_L |U^{1/p}(x) <f>_L| 1_L(x) over the r=1 operator.

    Cells where both vanish count as ratio 0; returns (max ratio, skipped).
    """
    grid = U.grid
    upow = U.power(1.0 / p)
    lhs = np.zeros(grid.num_cells)
    for L in family:
        cells = cube_cells(grid, L)
        avg = average(f, L)
        lhs[cells] += np.linalg.norm(upow[cells] @ avg, axis=1)
    rhs = generalized_sparse_operator(U, p, 1.0, family, f, cache).values
    both_zero = (lhs == 0.0) & (rhs == 0.0)
    skipped = int(both_zero.sum())
    ratio = np.zeros(grid.num_cells)
    live = ~both_zero
    with np.errstate(divide="ignore"):
        ratio[live] = np.where(rhs[live] > 0.0, lhs[live] / rhs[live], np.inf)
    return float(ratio.max(initial=0.0)), skipped


def carleson_operator(U: MatrixWeightField, p: float, r: float,
                      a: CoefficientField, f: CellField,
                      cache: ReducingCache) -> CellField:
    """(sum_L a_L(x) <|U_L f|>_L^r 1_L(x))^{1/r}."""
    grid = U.grid
    acc = np.zeros(grid.num_cells)
    for L, arr in a.items():
        cells = cube_cells(grid, L)
        RL = cache.forward(L)
        mean_rf = float(np.mean(np.linalg.norm(f.values[cells] @ RL.T, axis=1)))
        acc[cells] += arr * mean_rf ** r
    return CellField(grid, acc ** (1.0 / r))


def sparse_family_coefficients(U: MatrixWeightField, p: float, family,
                               cache: ReducingCache) -> CoefficientField:
    """The sparse-family choice a_L(x) = ||U^{1/p}(x) U_L^{-1}||^2 on L."""
    grid = U.grid
    upow = U.power(1.0 / p)
    data = {}
    for L in family:
        cells = cube_cells(grid, L)
        data[L] = spectral_norms(upow[cells] @ cache.forward_inv(L)) ** 2
    return CoefficientField(grid, data)


def carleson_star_norm(a: CoefficientField, p: float, r: float) -> float:
    """sup over dyadic J of avg_J (sum_{L subset J} a_L(x) 1_L(x))^{p/r}."""
    grid = a.grid
    # stacked[x] accumulates a_L(x) over cubes of level >= current level;
    # dyadic nesting makes that exactly sum over L with x in L subset J.
    stacked = np.zeros(grid.num_cells)
    best = 0.0
    for level in range(grid.N, -1, -1):
        for cube in grid.cubes(level):
            arr = a.data.get(cube)
            if arr is not None:
                stacked[cube_cells(grid, cube)] += arr
        for cube in grid.cubes(level):
            cells = cube_cells(grid, cube)
            val = float(np.mean(stacked[cells] ** (p / r)))
            best = max(best, val)
    return best


def dyadic_square_function_scalar(f: CellField) -> CellField:
    """Standard scalar dyadic square function on the grid."""
    if f.kind == "vector":
        U = MatrixWeightField.identity(f.grid)
        return square_function(U, 2.0, f)
    coeffs = haar_transform(f)
    acc = np.zeros(f.grid.num_cells)
    for h, v in coeffs.items():
        cells = cube_cells(f.grid, h.cube)
        acc[cells] += float(v) ** 2 / h.cube.measure
    return CellField(f.grid, np.sqrt(acc))


def dyadic_maximal(f: CellField) -> CellField:
    """M_d f(x) = max over dyadic cubes Q containing x of <|f|>_Q."""
    grid = f.grid
    mag = pointwise_norm(f) if f.kind != "scalar" else np.abs(f.values)
    lat = CellField(grid, mag).lattice()
    best = lat.copy()
    coarse = lat
    for level in range(grid.N - 1, -1, -1):
        for axis in range(grid.d):
            m = coarse.shape[axis]
            shape = coarse.shape[:axis] + (m // 2, 2) + coarse.shape[axis + 1:]
            coarse = coarse.reshape(shape).mean(axis=axis + 1)
        up = coarse
        for axis in range(grid.d):
            up = np.repeat(up, 2 ** (grid.N - level), axis=axis)
        best = np.maximum(best, up)
    return CellField(grid, best.ravel())


def scalar_carleson_embedding_check(tau: dict, f: CellField, q: float):
    """Both sides of the scalar Carleson-sequence inequality.

    Returns (lhs, star, fq) with lhs = sum_Q tau_Q <|f|>_Q^q,
    star = sup_J |J|^{-1} sum_{L subset J} tau_L, fq = ||f||_q^q.
    """
    if q <= 1.0:
        raise GridError("q must exceed 1")
    grid = f.grid
    lhs = 0.0
    subtotal: dict = {}
    star = 0.0
    for level in range(grid.N, -1, -1):
        for cube in grid.cubes(level):
            t = float(tau.get(cube, 0.0))
            if t < 0.0:
                raise GridError("Carleson sequence must be nonnegative")
            total = t
            if level < grid.N:
                for child in cube.children():
                    total += subtotal.pop(child, 0.0)
            subtotal[cube] = total
            star = max(star, total / cube.measure)
            if t > 0.0:
                avg = float(np.mean(np.abs(f.values[cube_cells(grid, cube)])))
                lhs += t * avg ** q
    fq = lp_norm(f, q) ** q
    return lhs, star, fq


def operator_norm_lower_bound(op, p: float, V: MatrixWeightField,
                              trials: int = 8, seed: int = 0,
                              refine_rounds: int = 3,
                              refine_top: int = 24) -> float:
    """Lower bound for ||op||_{L^p(V) -> L^p} by randomized search.

    Candidates are random Haar-coefficient fields; each is refined by greedy
    sign/scale moves on its largest coefficients.  Deterministic given seed.
    """
    from .haar import random_field  # local import avoids cycle at module load

    if trials < 1:
        raise GridError("trials must be at least 1")
    grid = V.grid
    rng = np.random.default_rng(seed)

    def ratio_of(f: CellField) -> float:
        den = weighted_lp_norm(f, V, p)
        if den == 0.0:
            return 0.0
        return lp_norm(op(f), p) / den

    best = 0.0
    for _ in range(trials):
        f = random_field(grid, rng, decay=rng.uniform(0.5, 1.0))
        r = ratio_of(f)
        coeffs = haar_transform(f)
        keys = sorted(
            coeffs.coeffs,
            key=lambda h: -float(np.linalg.norm(np.atleast_1d(coeffs.coeffs[h]))),
        )[:refine_top]
        for _ in range(refine_rounds):
            improved = False
            for h in keys:
                base_vec = np.array(coeffs.coeffs[h], dtype=float)
                for scale in (-1.0, 0.5, 2.0):
                    coeffs.coeffs[h] = scale * base_vec
                    cand = ratio_of(reconstruct(coeffs))
                    if cand > r:
                        r = cand
                        base_vec = np.array(coeffs.coeffs[h], dtype=float)
                        improved = True
                coeffs.coeffs[h] = base_vec
            if not improved:
                break
        best = max(best, r)
    return best
