"""Deterministic weight and test-function generators for experiments."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .grid import CellField, GridError, GridSpec, cube_cells
from .haar import random_field
from .weights import DefinitenessError, MatrixWeightField

KINDS = (
    "scalar-power",
    "matrix-rotation-power",
    "random-log-bounded",
    "two-weight-pair",
)


@dataclass
class WeightFamilySpec:
    grid: GridSpec
    kind: str = "random-log-bounded"
    alpha: tuple = (0.5,)
    center: tuple | None = None
    rotation_profile: float = 1.0
    log_amplitude: float = 0.6
    decay: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GridError(f"unknown weight family kind {self.kind!r}")


def _distances(grid: GridSpec, center) -> np.ndarray:
    centers = grid.cell_centers()
    x0 = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    return np.linalg.norm(centers - x0, axis=1)


def _rotation(theta: float, n: int) -> np.ndarray:
    """Rotation in the first coordinate plane, identity elsewhere."""
    R = np.eye(n)
    if n >= 2:
        c, s = np.cos(theta), np.sin(theta)
        R[0, 0], R[0, 1], R[1, 0], R[1, 1] = c, -s, s, c
    return R


def _scalar_power_values(spec: WeightFamilySpec) -> np.ndarray:
    dist = _distances(spec.grid, spec.center)
    return dist ** spec.alpha[0]


def _log_bounded_field(grid: GridSpec, rng, amplitude: float,
                       decay: float) -> np.ndarray:
    """exp of a random symmetric multiscale field, SPD by construction."""
    n = grid.n
    log_field = np.zeros((grid.num_cells, n, n))
    s = amplitude * rng.standard_normal((n, n))
    log_field += 0.5 * (s + s.T)
    for level in range(1, grid.N + 1):
        amp = amplitude * decay ** level
        for cube in grid.cubes(level):
            s = amp * rng.standard_normal((n, n))
            log_field[cube_cells(grid, cube)] += 0.5 * (s + s.T)
    w, q = np.linalg.eigh(log_field)
    out = np.einsum("cij,cj,ckj->cik", q, np.exp(w), q)
    return 0.5 * (out + out.transpose(0, 2, 1))


def generate_weight(spec: WeightFamilySpec):
    """Matrix weight field (or a (U, V) pair for kind two-weight-pair).

    Deterministic given spec.seed; fields are SPD-validated on construction.
    """
    grid = spec.grid
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "scalar-power":
        w = _scalar_power_values(spec)
        if np.any(w <= 0.0):
            raise DefinitenessError(
                "scalar-power weight vanishes at a cell center; move the center"
            )
        return MatrixWeightField.from_scalar(grid, w)
    if spec.kind == "matrix-rotation-power":
        dist = _distances(grid, spec.center)
        alphas = list(spec.alpha) + [0.0] * (grid.n - len(spec.alpha))
        centers = grid.cell_centers()
        vals = np.empty((grid.num_cells, grid.n, grid.n))
        for c in range(grid.num_cells):
            theta = 2.0 * np.pi * spec.rotation_profile * centers[c, 0]
            R = _rotation(theta, grid.n)
            D = np.diag([dist[c] ** a for a in alphas[: grid.n]])
            vals[c] = R @ D @ R.T
        return MatrixWeightField(grid, vals)
    if spec.kind == "random-log-bounded":
        return MatrixWeightField(
            grid, _log_bounded_field(grid, rng, spec.log_amplitude, spec.decay)
        )
    # two-weight-pair: independent log-bounded U and V from split streams
    u_vals = _log_bounded_field(grid, rng, spec.log_amplitude, spec.decay)
    v_vals = _log_bounded_field(grid, rng, spec.log_amplitude, spec.decay)
    return MatrixWeightField(grid, u_vals), MatrixWeightField(grid, v_vals)


def generate_function(grid: GridSpec, seed: int, decay: float = 1.0,
                      amplitude: float = 1.0,
                      spike_sigma: float = 3.0) -> CellField:
    """Random vector-valued test function with multiscale Haar content.

    Coefficients carry lognormal scale spikes (spike_sigma > 0) so that the
    stopping rules genuinely fire on ensemble members; spike_sigma = 0 gives
    a plain Gaussian Haar spectrum.
    """
    from .haar import HaarCoefficients, HaarSignature, reconstruct, signatures

    rng = np.random.default_rng(seed)
    top = amplitude * rng.standard_normal(grid.n)
    coeffs = {}
    for level in range(grid.N):
        amp = amplitude * decay ** (level + 1)
        for cube in grid.cubes(level):
            for sigma in signatures(grid.d):
                scale = np.exp(spike_sigma * rng.standard_normal())
                coeffs[HaarSignature(cube, sigma)] = (
                    amp * scale * rng.standard_normal(grid.n)
                )
    return reconstruct(HaarCoefficients(grid, top, coeffs))
