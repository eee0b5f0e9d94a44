"""SPD matrix weight fields, reducing matrices, and weight characteristics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ellipsoid import mvee_shape, unit_directions
from .grid import (
    CellField,
    DyadicCube,
    GridError,
    GridSpec,
    cube_cells,
    cube_lattice_slices,
)

EIG_FLOOR_REL = 1e-10
SYMMETRY_TOL = 1e-10
DEFAULT_MVEE_TOL = 1e-6
DEFAULT_MVEE_MAX_ITER = 100000


class DefinitenessError(ValueError):
    """A matrix that must be SPD is not (or is below the eigenvalue floor)."""


def pprime(p: float) -> float:
    if not 1.0 < p < np.inf:
        raise GridError("p must lie in (1, inf)")
    return p / (p - 1.0)


def validate_spd(a: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Check symmetry and positive definiteness; return the symmetrized matrix."""
    a = np.asarray(a, dtype=float)
    scale = max(np.abs(a).max(), 1e-300)
    if np.abs(a - a.T).max() > SYMMETRY_TOL * scale:
        raise DefinitenessError("matrix is not symmetric")
    sym = 0.5 * (a + a.T)
    w = np.linalg.eigvalsh(sym)
    if w.min() <= floor:
        raise DefinitenessError(
            f"matrix has eigenvalue {w.min():.3e} at or below floor {floor:.3e}"
        )
    return sym


def spd_power(a: np.ndarray, t: float) -> np.ndarray:
    """A^t for SPD A via spectral decomposition."""
    sym = validate_spd(a)
    w, q = np.linalg.eigh(sym)
    out = (q * w ** t) @ q.T
    return 0.5 * (out + out.T)


def operator_norm(a: np.ndarray) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(np.asarray(a, dtype=float), 2))


def _det3(g):
    return (
        g[..., 0, 0] * (g[..., 1, 1] * g[..., 2, 2] - g[..., 1, 2] * g[..., 2, 1])
        - g[..., 0, 1] * (g[..., 1, 0] * g[..., 2, 2] - g[..., 1, 2] * g[..., 2, 0])
        + g[..., 0, 2] * (g[..., 1, 0] * g[..., 2, 1] - g[..., 1, 1] * g[..., 2, 0])
    )


def largest_eigval_sym(g: np.ndarray) -> np.ndarray:
    """Largest eigenvalue of a batch of symmetric PSD matrices (..., n, n).

    Closed forms for n <= 3 keep the big pairwise characteristic sums fast;
    larger n falls back to LAPACK.
    """
    n = g.shape[-1]
    if n == 1:
        return g[..., 0, 0]
    if n == 2:
        t = g[..., 0, 0] + g[..., 1, 1]
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        disc = np.sqrt(np.maximum(t * t - 4.0 * det, 0.0))
        return 0.5 * (t + disc)
    if n == 3:
        q = (g[..., 0, 0] + g[..., 1, 1] + g[..., 2, 2]) / 3.0
        eye = np.eye(3)
        b = g - q[..., None, None] * eye
        p2 = np.sum(b * b, axis=(-2, -1)) / 6.0
        p = np.sqrt(np.maximum(p2, 0.0))
        safe = p > 0
        r = np.zeros_like(p)
        detb = _det3(np.where(safe[..., None, None], b, eye))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(safe, detb / (2.0 * np.maximum(p, 1e-300) ** 3), 0.0)
        r = np.clip(r, -1.0, 1.0)
        phi = np.arccos(r) / 3.0
        return np.where(safe, q + 2.0 * p * np.cos(phi), q)
    return np.linalg.eigvalsh(g)[..., -1]


def spectral_norms(batch: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix in a (..., n, n) batch."""
    g = np.einsum("...ji,...jk->...ik", batch, batch)
    return np.sqrt(np.maximum(largest_eigval_sym(g), 0.0))


class MatrixWeightField:
    """SPD matrix field at finest resolution with cached fractional powers."""

    def __init__(self, grid: GridSpec, values: np.ndarray, clamp: bool = False,
                 cond_cap: float = 1e14):
        values = np.asarray(values, dtype=float)
        base = CellField(grid, values)
        if base.kind != "matrix":
            raise GridError("matrix weight field requires (cells, n, n) values")
        vals = base.values
        scale = np.abs(vals).max(axis=(1, 2))
        asym = np.abs(vals - vals.transpose(0, 2, 1)).max(axis=(1, 2))
        if np.any(asym > SYMMETRY_TOL * np.maximum(scale, 1e-300)):
            raise DefinitenessError("weight field has a non-symmetric cell")
        vals = 0.5 * (vals + vals.transpose(0, 2, 1))
        w, q = np.linalg.eigh(vals)
        floor = EIG_FLOOR_REL * w.max()
        if w.min() <= floor:
            if clamp:
                w = np.maximum(w, floor)
            else:
                bad = int(np.argmin(w.min(axis=1)))
                raise DefinitenessError(
                    f"cell {bad} has eigenvalue {w.min():.3e} below floor "
                    f"{floor:.3e} (pass clamp=True to clamp)"
                )
        cond = w.max(axis=1) / w.min(axis=1)
        if cond.max() > cond_cap:
            raise DefinitenessError(
                f"cell condition number {cond.max():.3e} exceeds cap {cond_cap:.1e}"
            )
        self.grid = grid
        self._eigvals = w
        self._eigvecs = q
        self._powers: dict = {}
        self.base = np.einsum("cij,cj,ckj->cik", q, w, q)
        self.base = 0.5 * (self.base + self.base.transpose(0, 2, 1))

    @classmethod
    def identity(cls, grid: GridSpec) -> "MatrixWeightField":
        eye = np.broadcast_to(np.eye(grid.n), (grid.num_cells, grid.n, grid.n))
        return cls(grid, eye.copy())

    @classmethod
    def from_scalar(cls, grid: GridSpec, w: np.ndarray) -> "MatrixWeightField":
        """Scalar weight w(x) times the identity."""
        w = np.asarray(w, dtype=float)
        vals = w[:, None, None] * np.eye(grid.n)
        return cls(grid, vals)

    def power(self, t: float) -> np.ndarray:
        """Cell field of base^t, cached per exponent."""
        key = float(t)
        if key not in self._powers:
            out = np.einsum(
                "cij,cj,ckj->cik", self._eigvecs, self._eigvals ** t, self._eigvecs
            )
            self._powers[key] = 0.5 * (out + out.transpose(0, 2, 1))
        return self._powers[key]

    def power_field(self, t: float) -> "MatrixWeightField":
        """base^t as a fresh weight field (for e.g. V^{-p'/p})."""
        return MatrixWeightField(self.grid, self.power(t))

    def scalar_values(self) -> np.ndarray:
        if self.grid.n != 1:
            raise GridError("scalar_values requires n = 1")
        return self.base[:, 0, 0]


def directional_lp_average(power_field: np.ndarray, cells: np.ndarray,
                           dirs: np.ndarray, q: float) -> np.ndarray:
    """rho(e) = (avg over cells of |P(x) e|^q)^{1/q} for each direction e."""
    pe = np.einsum("cij,mj->cmi", power_field[cells], dirs)
    mags = np.linalg.norm(pe, axis=2)
    return (np.mean(mags ** q, axis=0)) ** (1.0 / q)


def _reducing_from_power(power_field: np.ndarray, cells: np.ndarray, q: float,
                         n: int, m: int, tol: float, max_iter: int) -> np.ndarray:
    dirs = unit_directions(n, m)
    rho = directional_lp_average(power_field, cells, dirs, q)
    if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
        raise DefinitenessError("degenerate weight: zero directional average")
    points = dirs / rho[:, None]
    shape = mvee_shape(points, tol=tol, max_iter=max_iter)
    return spd_power(shape, 0.5)


def reducing_matrix(W: MatrixWeightField, I: DyadicCube, p: float,
                    m: int | None = None, tol: float = DEFAULT_MVEE_TOL,
                    max_iter: int = DEFAULT_MVEE_MAX_ITER,
                    method: str = "auto") -> np.ndarray:
    """SPD matrix R with |R e| ~ (avg_I |W^{1/p}(x) e|^p)^{1/p}.

    |R e| underestimates the directional average by at most a factor sqrt(n)
    (John's theorem) on sampled directions.  method: 'auto' uses closed forms
    for n=1 and p=2, 'mvee' forces the ellipsoid fit, 'closed' requires a
    closed form.
    """
    n = W.grid.n
    cells = cube_cells(W.grid, I)
    if m is None:
        m = max(16 * n * n, 16)
    if method not in ("auto", "mvee", "closed"):
        raise GridError(f"unknown reducing method {method!r}")
    if n == 1 and method != "mvee":
        w = W.scalar_values()[cells]
        return np.array([[np.mean(w) ** (1.0 / p)]])
    if p == 2.0 and method != "mvee":
        return spd_power(W.base[cells].mean(axis=0), 0.5)
    if method == "closed":
        raise GridError("no closed form for this (n, p); use mvee")
    return _reducing_from_power(W.power(1.0 / p), cells, p, n, m, tol, max_iter)


def dual_reducing_matrix(W: MatrixWeightField, I: DyadicCube, p: float,
                         m: int | None = None, tol: float = DEFAULT_MVEE_TOL,
                         max_iter: int = DEFAULT_MVEE_MAX_ITER,
                         method: str = "auto") -> np.ndarray:
    """SPD R' with |R' e| ~ (avg_I |W^{-1/p}(x) e|^{p'})^{1/p'}."""
    n = W.grid.n
    q = pprime(p)
    cells = cube_cells(W.grid, I)
    if m is None:
        m = max(16 * n * n, 16)
    if n == 1 and method != "mvee":
        w = W.power(-q / p)[cells, 0, 0]
        return np.array([[np.mean(w) ** (1.0 / q)]])
    if p == 2.0 and method != "mvee":
        return spd_power(W.power(-1.0)[cells].mean(axis=0), 0.5)
    if method == "closed":
        raise GridError("no closed form for this (n, p); use mvee")
    return _reducing_from_power(W.power(-1.0 / p), cells, q, n, m, tol, max_iter)


class ReducingCache:
    """Per-cube reducing matrices (and inverses) for one weight and exponent."""

    def __init__(self, W: MatrixWeightField, p: float, m: int | None = None,
                 tol: float = DEFAULT_MVEE_TOL, method: str = "auto"):
        self.W = W
        self.p = p
        self.m = m
        self.tol = tol
        self.method = method
        self._fwd: dict = {}
        self._dual: dict = {}
        self._fwd_inv: dict = {}

    def forward(self, I: DyadicCube) -> np.ndarray:
        if I not in self._fwd:
            self._fwd[I] = reducing_matrix(
                self.W, I, self.p, m=self.m, tol=self.tol, method=self.method
            )
        return self._fwd[I]

    def forward_inv(self, I: DyadicCube) -> np.ndarray:
        if I not in self._fwd_inv:
            self._fwd_inv[I] = np.linalg.inv(self.forward(I))
        return self._fwd_inv[I]

    def dual(self, I: DyadicCube) -> np.ndarray:
        if I not in self._dual:
            self._dual[I] = dual_reducing_matrix(
                self.W, I, self.p, m=self.m, tol=self.tol, method=self.method
            )
        return self._dual[I]


def _pairwise_norm_powers(U: MatrixWeightField, V: MatrixWeightField, p: float,
                          block: int = 64) -> np.ndarray:
    """Matrix M[x, y] = ||V^{-1/p}(y) U^{1/p}(x)||^{p'} over all cell pairs."""
    q = pprime(p)
    A = U.power(1.0 / p)
    B = V.power(-1.0 / p)
    c = A.shape[0]
    out = np.empty((c, c))
    for start in range(0, c, block):
        stop = min(start + block, c)
        prod = np.einsum("yij,xjk->xyik", B, A[start:stop])
        out[start:stop] = spectral_norms(prod) ** q
    return out


def ap_characteristic(U: MatrixWeightField, V: MatrixWeightField, p: float):
    """Two-weight matrix A_p characteristic over the dyadic cubes of the grid.

    Returns (value, argmax cube); exact double average per cube.
    """
    grid = U.grid
    if V.grid != grid:
        raise GridError("weight grids differ")
    q = pprime(p)
    M = _pairwise_norm_powers(U, V, p)
    best, best_cube = -np.inf, None
    for cube in grid.all_cubes():
        idx = cube_cells(grid, cube)
        sub = M[np.ix_(idx, idx)]
        val = float(np.mean(np.mean(sub, axis=1) ** (p / q)))
        if val > best:
            best, best_cube = val, cube
    return best, best_cube


def ap_characteristic_reduced(U: MatrixWeightField, V: MatrixWeightField,
                              p: float, u_cache: ReducingCache | None = None,
                              v_cache: ReducingCache | None = None):
    """sup over cubes of ||U_I V_I'||^p with reducing matrices."""
    grid = U.grid
    u_cache = u_cache or ReducingCache(U, p)
    v_cache = v_cache or ReducingCache(V, p)
    best, best_cube = -np.inf, None
    for cube in grid.all_cubes():
        val = operator_norm(u_cache.forward(cube) @ v_cache.dual(cube)) ** p
        if val > best:
            best, best_cube = val, cube
    return best, best_cube


def _level_block_averages(lat: np.ndarray, grid: GridSpec):
    """Average of a scalar lattice over every cube, per level (coarse first)."""
    out = [None] * (grid.N + 1)
    arr = lat.copy()
    out[grid.N] = lat
    for level in range(grid.N - 1, -1, -1):
        for axis in range(grid.d):
            m = arr.shape[axis]
            shape = arr.shape[:axis] + (m // 2, 2) + arr.shape[axis + 1:]
            arr = arr.reshape(shape).mean(axis=axis + 1)
        out[level] = arr
    return out


def _upsample(arr: np.ndarray, factor: int, d: int) -> np.ndarray:
    for axis in range(d):
        arr = np.repeat(arr, factor, axis=axis)
    return arr


def a_infty_fujii_wilson(w: CellField, return_argmax: bool = False):
    """Dyadic Fujii-Wilson A_infty of a positive scalar field.

    sup over cubes I of (1/int_I w) int_I M_d(w 1_I), with the maximal
    operator restricted to dyadic subcubes of the grid.
    """
    if w.kind != "scalar":
        raise GridError("a_infty requires a scalar field")
    if np.any(w.values <= 0.0):
        raise DefinitenessError("A_infty requires a positive weight")
    grid = w.grid
    avgs = _level_block_averages(w.lattice(), grid)
    best, best_cube = -np.inf, None
    for level in range(grid.N + 1):
        for cube in grid.cubes(level):
            slc = cube_lattice_slices(grid, cube)
            maximal = None
            for lev in range(level, grid.N + 1):
                s = 2 ** (grid.N - lev)
                sub_slc = tuple(
                    slice(k * 2 ** (lev - level), (k + 1) * 2 ** (lev - level))
                    for k in cube.index
                )
                block = _upsample(avgs[lev][sub_slc], s, grid.d)
                maximal = block if maximal is None else np.maximum(maximal, block)
            wlat = w.lattice()[slc]
            val = float(maximal.mean() / wlat.mean())
            if val > best:
                best, best_cube = val, cube
    if return_argmax:
        return best, best_cube
    return best


@dataclass
class ApwkResult:
    value: float
    direction: np.ndarray
    per_direction: np.ndarray
    directions_used: int


def apwk_characteristic(U: MatrixWeightField, p: float, m: int | None = None,
                        refine_rounds: int = 0, seed: int = 0) -> ApwkResult:
    """Weak matrix A_p characteristic: direction-sampled sup of the scalar
    A_infty of x -> |U^{1/p}(x) e|^p."""
    grid = U.grid
    n = grid.n
    if m is None:
        m = max(64, 2 * n * n)
    dirs = unit_directions(n, m)
    pow_field = U.power(1.0 / p)

    def scalarized(e):
        vals = np.linalg.norm(pow_field @ e, axis=1) ** p
        return CellField(grid, vals)

    per_dir = np.array([a_infty_fujii_wilson(scalarized(e)) for e in dirs])
    best_i = int(np.argmax(per_dir))
    best_val, best_dir = float(per_dir[best_i]), dirs[best_i].copy()
    rng = np.random.default_rng(seed)
    radius = 0.3
    for _ in range(refine_rounds):
        cands = best_dir + radius * rng.standard_normal((8, n))
        cands /= np.linalg.norm(cands, axis=1, keepdims=True)
        for e in cands:
            v = a_infty_fujii_wilson(scalarized(e))
            if v > best_val:
                best_val, best_dir = v, e.copy()
        radius *= 0.5
    return ApwkResult(best_val, best_dir, per_dir, m)


@dataclass
class ReverseHolderResult:
    epsilon: float
    rh_constant: float
    epsilon_times_a_infty: float


def reverse_holder_exponent(w: CellField, max_k: int = 40) -> ReverseHolderResult:
    """Largest epsilon in {2^-k} with sup_I (avg w^{1+eps})^{1/(1+eps)} / avg w <= 2."""
    if w.kind != "scalar":
        raise GridError("reverse Holder requires a scalar field")
    if np.any(w.values <= 0.0):
        raise DefinitenessError("reverse Holder requires a positive weight")
    grid = w.grid
    fw = a_infty_fujii_wilson(w)

    def rh_constant(eps: float) -> float:
        worst = -np.inf
        pow_avgs = _level_block_averages(w.lattice() ** (1.0 + eps), grid)
        plain = _level_block_averages(w.lattice(), grid)
        for level in range(grid.N + 1):
            ratio = pow_avgs[level] ** (1.0 / (1.0 + eps)) / plain[level]
            worst = max(worst, float(np.max(ratio)))
        return worst

    for k in range(max_k + 1):
        eps = 2.0 ** (-k)
        c = rh_constant(eps)
        if c <= 2.0:
            return ReverseHolderResult(eps, c, eps * fw)
    eps = 2.0 ** (-max_k)
    return ReverseHolderResult(eps, rh_constant(eps), eps * fw)


@dataclass
class Characteristics:
    """Bundle of weight characteristics with argmax witnesses."""

    p: float
    ap: float
    ap_argmax: tuple
    ap_reduced: float
    ap_reduced_argmax: tuple
    apwk: float
    apwk_direction: list
    directions_used: int
    rh_epsilon: float

    def to_json_dict(self) -> dict:
        return {
            "p": self.p,
            "ap": self.ap,
            "ap_reduced": self.ap_reduced,
            "apwk": self.apwk,
            "directions_used": self.directions_used,
            "argmax_cube": list(self.ap_argmax),
            "rh_epsilon": self.rh_epsilon,
        }


def compute_characteristics(U: MatrixWeightField, V: MatrixWeightField,
                            p: float, m: int | None = None) -> Characteristics:
    """All characteristics of a weight pair in one record."""
    ap, ap_cube = ap_characteristic(U, V, p)
    apr, apr_cube = ap_characteristic_reduced(U, V, p)
    wk = apwk_characteristic(U, p, m=m)
    pow_scalar = CellField(
        U.grid, np.linalg.norm(U.power(1.0 / p) @ wk.direction, axis=1) ** p
    )
    rh = reverse_holder_exponent(pow_scalar)
    return Characteristics(
        p=p,
        ap=float(ap),
        ap_argmax=ap_cube.as_tuple(),
        ap_reduced=float(apr),
        ap_reduced_argmax=apr_cube.as_tuple(),
        apwk=wk.value,
        apwk_direction=[float(x) for x in wk.direction],
        directions_used=wk.directions_used,
        rh_epsilon=rh.epsilon,
    )
