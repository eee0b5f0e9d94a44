"""Stopping-time constructions: sparse families from the square-function
stopping rule, corona decompositions, and their exact verifiers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import CellField, DyadicCube, GridError, GridSpec, cube_cells
from .haar import HaarCoefficients, haar_transform, signatures, HaarSignature
from .operators import sparse_positive_operator, square_function
from .weights import MatrixWeightField, ReducingCache, operator_norm


@dataclass
class StoppingConfig:
    lam: float = 16.0
    escalation: float = 2.0
    max_escalations: int = 20

    def __post_init__(self):
        if self.lam <= 1.0:
            raise GridError("lambda must exceed 1")


@dataclass
class SparseFamily:
    top: DyadicCube
    generations: dict  # DyadicCube -> generation index
    lam: float

    @property
    def cubes(self):
        return list(self.generations)

    def __iter__(self):
        return iter(self.generations)

    def __len__(self):
        return len(self.generations)

    def generation(self, k: int):
        return [c for c, g in self.generations.items() if g == k]


@dataclass
class CoronaDecomposition:
    top: DyadicCube
    generations: dict  # DyadicCube -> generation index
    children: dict  # J -> list of stopping children G(J)
    blocks: dict  # J -> list of cubes in E(J)
    lam: float


@dataclass
class CalibrationResult:
    lam: float
    escalations: int
    result: object
    report: object


class CalibrationError(RuntimeError):
    """Verifier kept failing through all lambda escalations."""


def _coeff_energy(coeffs: HaarCoefficients, R: np.ndarray, cube: DyadicCube) -> float:
    """sum_sigma |R f_cube^sigma|^2 (zero when the cube carries no Haar data)."""
    total = 0.0
    for sigma in signatures(cube.d):
        v = coeffs.get(HaarSignature(cube, sigma))
        if v is not None:
            rv = R @ np.atleast_1d(np.asarray(v, dtype=float))
            total += float(rv @ rv)
    return total


def stopping_children_sq(U: MatrixWeightField, p: float, f: CellField,
                         J: DyadicCube, lam: float, cache: ReducingCache,
                         coeffs: HaarCoefficients | None = None):
    """Maximal strict subcubes L of J where the running Haar energy
    sum_{J >= I >= L} |U_J f_I|^2 / |I| exceeds lam <|U_J f|>_J^2."""
    grid = U.grid
    if coeffs is None:
        coeffs = haar_transform(f)
    RJ = cache.forward(J)
    cells = cube_cells(grid, J)
    mean_rf = float(np.mean(np.linalg.norm(f.values[cells] @ RJ.T, axis=1)))
    if mean_rf == 0.0:
        return set()
    threshold = lam * mean_rf ** 2
    stopped = set()

    def descend(cube: DyadicCube, running: float):
        if cube.level >= grid.N:
            return
        for child in cube.children():
            run_child = running + _coeff_energy(coeffs, RJ, child) / child.measure
            if run_child > threshold:
                stopped.add(child)
            else:
                descend(child, run_child)

    root_running = _coeff_energy(coeffs, RJ, J) / J.measure
    descend(J, root_running)
    return stopped


def build_sparse_family(U: MatrixWeightField, p: float, f: CellField,
                        lam: float, cache: ReducingCache,
                        coeffs: HaarCoefficients | None = None) -> SparseFamily:
    """Iterate the stopping rule from the top cube, labeling generations."""
    grid = U.grid
    if coeffs is None:
        coeffs = haar_transform(f)
    top = grid.top()
    generations = {top: 0}
    frontier = [top]
    k = 0
    while frontier:
        k += 1
        nxt = []
        for J in frontier:
            for L in stopping_children_sq(U, p, f, J, lam, cache, coeffs):
                generations[L] = k
                nxt.append(L)
        frontier = nxt
    return SparseFamily(top, generations, lam)


def _strict_members_union_measure(grid: GridSpec, members, J: DyadicCube) -> float:
    """Exact measure of the union of family members strictly inside J."""
    covered = np.zeros(grid.num_cells, dtype=bool)
    for L in members:
        if L != J and J.contains(L):
            covered[cube_cells(grid, L)] = True
    return float(covered.sum()) * grid.cell_measure


def verify_sparse(grid: GridSpec, family) -> tuple:
    """Check union of strict sub-members <= |J|/2 for every member J.

    Returns (ok, worst ratio, worst cube).
    """
    members = list(family)
    worst, worst_cube = 0.0, None
    for J in members:
        ratio = _strict_members_union_measure(grid, members, J) / J.measure
        if ratio > worst:
            worst, worst_cube = ratio, J
    return worst <= 0.5, worst, worst_cube


def verify_pointwise_domination(U: MatrixWeightField, p: float, f: CellField,
                                family, lam: float, cache: ReducingCache,
                                coeffs: HaarCoefficients | None = None):
    """Max over cells of S_{U,p}f / sparse operator; cells where both vanish
    are skipped.  Returns (max ratio, argmax cell, skipped count)."""
    S = square_function(U, p, f, coeffs=coeffs).values
    T = sparse_positive_operator(U, p, family, f, cache).values
    both_zero = (S == 0.0) & (T == 0.0)
    skipped = int(both_zero.sum())
    ratio = np.zeros_like(S)
    live = ~both_zero
    with np.errstate(divide="ignore"):
        ratio[live] = np.where(T[live] > 0.0, S[live] / T[live], np.inf)
    if not np.any(live):
        return 0.0, -1, skipped
    arg = int(np.argmax(ratio))
    return float(ratio[arg]), arg, skipped


def _level_means_within(grid: GridSpec, values: np.ndarray, J: DyadicCube):
    """Mean of a scalar cell array over every subcube of J, as {cube: mean}."""
    out = {}
    stack = [J]
    while stack:
        cube = stack.pop()
        out[cube] = float(np.mean(values[cube_cells(grid, cube)]))
        if cube.level < grid.N:
            stack.extend(cube.children())
    return out


def corona_children(U: MatrixWeightField, p: float, f: CellField,
                    J: DyadicCube, lam: float, cache: ReducingCache):
    """Maximal strict subcubes of J with average blow-up (3.1-type) or
    reducing-matrix drift (3.2-type)."""
    grid = U.grid
    RJ = cache.forward(J)
    RJ_inv = cache.forward_inv(J)
    g = np.linalg.norm(f.values @ RJ.T, axis=1)
    means = _level_means_within(grid, g, J)
    base = means[J]
    stopped = set()

    def stops(L: DyadicCube) -> bool:
        if means[L] > lam * base:
            return True
        return operator_norm(cache.forward(L) @ RJ_inv) > lam

    def descend(cube: DyadicCube):
        if cube.level >= grid.N:
            return
        for child in cube.children():
            if stops(child):
                stopped.add(child)
            else:
                descend(child)

    descend(J)
    return stopped


def build_corona(U: MatrixWeightField, p: float, f: CellField, lam: float,
                 cache: ReducingCache) -> CoronaDecomposition:
    """Full corona decomposition from the top cube.

    Blocks E(J) collect the cubes inside J not contained in any stopping
    child of J; by construction they partition all cubes of the grid.
    """
    grid = U.grid
    top = grid.top()
    generations = {top: 0}
    children: dict = {}
    blocks: dict = {}
    frontier = [top]
    k = 0
    while frontier:
        k += 1
        nxt = []
        for J in frontier:
            kids = sorted(
                corona_children(U, p, f, J, lam, cache), key=lambda c: c.as_tuple()
            )
            children[J] = kids
            blocks[J] = _corona_block(grid, J, kids)
            for L in kids:
                generations[L] = k
                nxt.append(L)
        frontier = nxt
    return CoronaDecomposition(top, generations, children, blocks, lam)


def _corona_block(grid: GridSpec, J: DyadicCube, kids):
    """Cubes inside J not contained in any stopping child."""
    kid_set = set(kids)
    block = []
    stack = [J]
    while stack:
        cube = stack.pop()
        if cube != J and cube in kid_set:
            continue
        block.append(cube)
        if cube.level < grid.N:
            stack.extend(cube.children())
    return block


@dataclass
class CoronaReport:
    packing_ok: bool
    worst_packing: float
    packing_argmax: DyadicCube | None
    partition_ok: bool
    control_ok: bool
    worst_control: float
    control_argmax: DyadicCube | None
    control_bound: float


def verify_corona(dec: CoronaDecomposition, U: MatrixWeightField, p: float,
                  f: CellField, lam: float, cache: ReducingCache,
                  control_slack: float = 1.0) -> CoronaReport:
    """Check packing sum|G(J)| <= |J|/4, the exact partition, and the
    lam^2 corona control on every block member."""
    grid = U.grid
    worst_pack, pack_arg = 0.0, None
    for J, kids in dec.children.items():
        ratio = sum(L.measure for L in kids) / J.measure
        if ratio > worst_pack:
            worst_pack, pack_arg = ratio, J
    # partition: every cube in exactly one block
    seen: dict = {}
    partition_ok = True
    for J, block in dec.blocks.items():
        for cube in block:
            if cube in seen:
                partition_ok = False
            seen[cube] = J
    total_cubes = sum(1 for _ in grid.all_cubes())
    partition_ok = partition_ok and len(seen) == total_cubes

    worst_ctrl, ctrl_arg = 0.0, None
    for J, block in dec.blocks.items():
        RJ = cache.forward(J)
        gJ = float(
            np.mean(np.linalg.norm(f.values[cube_cells(grid, J)] @ RJ.T, axis=1))
        )
        if gJ == 0.0:
            continue
        for L in block:
            RL = cache.forward(L)
            gL = float(
                np.mean(np.linalg.norm(f.values[cube_cells(grid, L)] @ RL.T, axis=1))
            )
            ratio = gL / (lam ** 2 * gJ)
            if ratio > worst_ctrl:
                worst_ctrl, ctrl_arg = ratio, L
    bound = control_slack
    return CoronaReport(
        packing_ok=worst_pack <= 0.25,
        worst_packing=worst_pack,
        packing_argmax=pack_arg,
        partition_ok=partition_ok,
        control_ok=worst_ctrl <= bound,
        worst_control=worst_ctrl,
        control_argmax=ctrl_arg,
        control_bound=bound,
    )


def calibrate_lambda(builder, verifier, config: StoppingConfig) -> CalibrationResult:
    """Double lambda until the verifier accepts; builder(lam) -> object,
    verifier(object, lam) -> (ok, report)."""
    lam = config.lam
    for k in range(config.max_escalations + 1):
        obj = builder(lam)
        ok, report = verifier(obj, lam)
        if ok:
            return CalibrationResult(lam, k, obj, report)
        lam *= config.escalation
    raise CalibrationError(
        f"verifier still failing at lambda={lam / config.escalation} after "
        f"{config.max_escalations} escalations; last report: {report}"
    )


@dataclass
class DisjointSets:
    pieces: dict  # L -> boolean mask over cells
    disjoint: bool
    worst_measure_ratio: float  # max over L of |L| / |E_L|


def disjoint_sets(grid: GridSpec, family) -> DisjointSets:
    """E_L = L minus the union of strictly smaller family members.

    Verifies pairwise disjointness and |L| <= 2 |E_L|.
    """
    members = list(family)
    pieces = {}
    claimed = np.zeros(grid.num_cells, dtype=bool)
    disjoint = True
    worst = 0.0
    for L in members:
        mask = np.zeros(grid.num_cells, dtype=bool)
        mask[cube_cells(grid, L)] = True
        for Lp in members:
            if Lp != L and L.contains(Lp):
                mask[cube_cells(grid, Lp)] = False
        if np.any(mask & claimed):
            disjoint = False
        claimed |= mask
        e_measure = float(mask.sum()) * grid.cell_measure
        if e_measure == 0.0:
            worst = np.inf
        else:
            worst = max(worst, L.measure / e_measure)
        pieces[L] = mask
    return DisjointSets(pieces, disjoint, worst)
