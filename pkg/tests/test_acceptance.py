"""Acceptance gate: the nine primary criteria, each printing one line.

Criteria 4-7 share two session-scoped 32-member ensembles (seed 1), so this
module takes a few minutes; everything else is seconds.
"""
import json
import time

import numpy as np
import pytest

from mwsf.ellipsoid import unit_directions
from mwsf.experiments import (
    EnsembleConfig,
    john_constant,
    run_domination_experiment,
    run_norm_bound_experiment,
)
from mwsf.generators import WeightFamilySpec, generate_function, generate_weight
from mwsf.grid import CellField, DyadicCube, GridSpec, cube_cells, lp_norm
from mwsf.haar import haar_transform
from mwsf.operators import (
    carleson_star_norm,
    dyadic_square_function_scalar,
    generalized_sparse_operator,
    scalar_carleson_embedding_check,
    sparse_family_coefficients,
    square_function,
)
from mwsf.stopping import build_sparse_family, corona_children, stopping_children_sq
from mwsf.weights import (
    MatrixWeightField,
    ReducingCache,
    directional_lp_average,
    reducing_matrix,
    spd_power,
)

from reference import (
    naive_carleson_star,
    naive_corona_children,
    naive_sparse_operator,
    naive_square_function,
    naive_stopping_children,
)


def _verdict(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"[acceptance {k}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {k}: {detail}"


@pytest.fixture(scope="session")
def domination_report():
    return run_domination_experiment(EnsembleConfig(seed=1, members=32))


@pytest.fixture(scope="session")
def norm_report():
    return run_norm_bound_experiment(EnsembleConfig(seed=1, members=32))


def _geometry_haar_matrix(grid):
    """Haar functions as columns, built from cell-center geometry only."""
    centers = grid.cell_centers()
    cols = []
    from mwsf.haar import signatures  # ordering only

    for level in range(grid.N):
        side = 2.0 ** -level
        for cube in grid.cubes(level):
            cells = cube_cells(grid, cube)
            x = centers[cells]
            lo = np.array(cube.index) * side
            right = x >= lo + side / 2.0  # (cells, d) half indicator
            for sigma in signatures(grid.d):
                sign = np.where(
                    (right[:, np.array(sigma, dtype=bool)]).sum(axis=1) % 2 == 1,
                    -1.0,
                    1.0,
                )
                col = np.zeros(grid.num_cells)
                col[cells] = sign * cube.measure ** -0.5
                cols.append(col)
    return np.stack(cols, axis=1) if cols else np.zeros((grid.num_cells, 0))


def test_criterion_1_haar_suite(capsys):
    t0 = time.perf_counter()
    worst_gram = 0.0
    worst_mean = 0.0
    worst_const = 0.0
    worst_parseval = 0.0
    rng = np.random.default_rng(1)
    for d in (1, 2):
        for N in range(1, 7):
            grid = GridSpec(d, N, 1)
            H = _geometry_haar_matrix(grid)
            Hs = H * np.sqrt(grid.cell_measure)
            gram = Hs.T @ Hs
            worst_gram = max(
                worst_gram, float(np.abs(gram - np.eye(gram.shape[1])).max())
            )
            worst_mean = max(
                worst_mean, float(np.abs(H.sum(axis=0) * grid.cell_measure).max())
            )
            # child constancy: each column constant on every child block
            col = 0
            from mwsf.haar import signatures

            for level in range(grid.N):
                for cube in grid.cubes(level):
                    blocks = [cube_cells(grid, ch) for ch in cube.children()]
                    for _ in signatures(grid.d):
                        for b in blocks:
                            worst_const = max(worst_const, float(np.ptp(H[b, col])))
                        col += 1
            # Parseval through the implementation under test
            f = CellField(grid, rng.standard_normal(grid.num_cells))
            coeffs = haar_transform(f)
            energy = float(coeffs.top_average) ** 2 + sum(
                float(v) ** 2 for _, v in coeffs.items()
            )
            norm2 = lp_norm(f, 2.0) ** 2
            worst_parseval = max(worst_parseval, abs(energy - norm2) / norm2)
    elapsed = time.perf_counter() - t0
    ok = (
        worst_gram <= 1e-10
        and worst_mean <= 1e-10
        and worst_const == 0.0
        and worst_parseval <= 1e-10
        and elapsed < 10.0
    )
    _verdict(
        capsys, 1, ok,
        f"gram {worst_gram:.2e}, mean {worst_mean:.2e}, constancy {worst_const:.1e}, "
        f"parseval {worst_parseval:.2e}, {elapsed:.1f}s",
    )


def test_criterion_2_scalar_reduction(capsys):
    rng = np.random.default_rng(2)
    shapes = ((1, 3), (1, 4), (1, 5), (2, 2), (2, 3))
    worst = 0.0
    for i in range(100):
        d, N = shapes[i % len(shapes)]
        p = (1.5, 2.0, 3.0)[i % 3]
        grid = GridSpec(d, N, 1)
        u = np.exp(rng.standard_normal(grid.num_cells))
        U = MatrixWeightField.from_scalar(grid, u)
        f = generate_function(grid, int(rng.integers(1 << 30)), spike_sigma=1.0)
        lhs = lp_norm(square_function(U, p, f), p)
        Sd = dyadic_square_function_scalar(f).values
        rhs = float(np.sum(Sd ** p * u) * grid.cell_measure) ** (1.0 / p)
        worst = max(worst, abs(lhs - rhs) / max(rhs, 1e-300))
    ok = worst <= 1e-10
    _verdict(capsys, 2, ok, f"100 triples, worst relative gap {worst:.2e}")


def test_criterion_3_reducing_matrix_guarantee(capsys):
    rng = np.random.default_rng(3)
    worst_low, worst_high, worst_p2 = np.inf, 0.0, 0.0
    for i in range(100):
        n = (1, 2, 3)[i % 3]
        p = (1.25, 1.5, 2.0, 3.0)[i % 4]
        grid = GridSpec(1, int(rng.integers(2, 5)), n)
        W = generate_weight(
            WeightFamilySpec(grid, seed=int(rng.integers(1 << 30)),
                             log_amplitude=0.8)
        )
        level = int(rng.integers(0, grid.N))
        I = DyadicCube(level, (int(rng.integers(0, 2 ** level)),))
        # the guarantee is on sampled directions: fit and test the same set
        R = reducing_matrix(W, I, p, m=256, method="mvee" if n > 1 else "auto")
        dirs = unit_directions(n, 256)
        rho = directional_lp_average(W.power(1.0 / p), cube_cells(grid, I), dirs, p)
        ratio = rho / np.linalg.norm(dirs @ R.T, axis=1)
        worst_low = min(worst_low, float(ratio.min()))
        worst_high = max(worst_high, float(ratio.max()) / np.sqrt(n))
        if p == 2.0 and n > 1:
            closed = spd_power(W.base[cube_cells(grid, I)].mean(axis=0), 0.5)
            rel = np.linalg.norm(R - closed, 2) / np.linalg.norm(closed, 2)
            worst_p2 = max(worst_p2, float(rel))
    ok = worst_low >= 1.0 - 1e-9 and worst_high <= 1.0 + 1e-3 and worst_p2 <= 0.02
    _verdict(
        capsys, 3, ok,
        f"ratio in [{worst_low:.6f}, sqrt(n)*{worst_high:.6f}], "
        f"p=2 mvee vs closed {worst_p2:.2e}",
    )


def test_criterion_4_theorem_2_ensemble(capsys, domination_report):
    rep = domination_report
    escal_ok = all(m.escalations <= 20 for m in rep.members)
    sparse_ok = all(m.sparse_ok and m.sparse_worst_ratio <= 0.5 for m in rep.members)
    finite_ok = all(np.isfinite(m.domination_max_ratio) for m in rep.members)
    spreads = [
        v["rel_spread"] for k, v in rep.group_stats.items() if "rel_spread" in v
    ]
    stable = bool(spreads) and max(spreads) <= 0.2
    time_ok = rep.seconds < 300.0
    ok = escal_ok and sparse_ok and finite_ok and stable and time_ok and rep.all_pass
    _verdict(
        capsys, 4, ok,
        f"32 members, worst sparsity {max(m.sparse_worst_ratio for m in rep.members):.3f}, "
        f"constant spread {max(spreads):.3f}, {rep.seconds:.0f}s",
    )


def test_criterion_5_corona_verifiers(capsys, domination_report):
    rep = domination_report
    worst_pack = max(m.corona_packing for m in rep.members)
    worst_ctrl = max(
        m.corona_control / john_constant(m.config.n) for m in rep.members
    )
    ok = worst_pack <= 0.25 and worst_ctrl <= 1.0
    _verdict(
        capsys, 5, ok,
        f"packing {worst_pack:.4f} <= 1/4, control/(lam^2 C_n) {worst_ctrl:.4f}",
    )


def test_criterion_6_carleson_star_norm(capsys, domination_report):
    rep = domination_report
    worst = max(m.star_norm / m.star_bound for m in rep.members)
    ok = worst <= 1.0
    _verdict(capsys, 6, ok, f"worst ||A||_*/(1.5 C_n) = {worst:.4f}")


def test_criterion_7_theorem_1_bound(capsys, norm_report, tmp_path):
    rep = norm_report
    ps = sorted({m.config.p for m in rep.members})
    coverage = all(p in ps for p in (1.25, 1.5, 2.0, 3.0))
    triple = all(
        m.apwk_forward > 0.0 for m in rep.members if m.config.p > 2.0
    )
    if not rep.all_pass:
        with open(tmp_path / "witness.json", "w") as fh:
            json.dump(rep.witness, fh, indent=2, default=float)
    worst = max(m.estimate / (m.slack * m.bound) for m in rep.members)
    ok = rep.all_pass and coverage and triple
    _verdict(
        capsys, 7, ok,
        f"p grid {ps}, worst estimate/(10 C_n bound) = {worst:.4f}",
    )


def test_criterion_8_exhaustive_oracles(capsys):
    shapes = (
        [(1, N) for N in range(0, 7)]
        + [(2, N) for N in range(0, 4)]
        + [(3, N) for N in range(0, 3)]
    )
    rng = np.random.default_rng(8)
    worst = 0.0
    stop_mismatch = 0
    checked = 0
    for d, N in shapes:
        for n in (1, 2):
            grid = GridSpec(d, N, n)
            assert grid.num_cells <= 64
            U = generate_weight(
                WeightFamilySpec(grid, seed=int(rng.integers(1 << 30)))
            )
            f = generate_function(grid, int(rng.integers(1 << 30)), spike_sigma=1.0)
            p = 2.0
            cache = ReducingCache(U, p)
            S = square_function(U, p, f).values
            worst = max(worst, float(np.abs(S - naive_square_function(U, p, f)).max()))
            family = build_sparse_family(U, p, f, 2.0, cache)
            for r in (1.0, 2.0):
                got = generalized_sparse_operator(U, p, r, family, f, cache).values
                want = naive_sparse_operator(U, p, r, family, f, cache)
                worst = max(worst, float(np.abs(got - want).max()))
            a = sparse_family_coefficients(U, p, family, cache)
            star = carleson_star_norm(a, p, 2.0)
            worst = max(worst, abs(star - naive_carleson_star(a, p, 2.0)))
            if N > 0:
                top = grid.top()
                if stopping_children_sq(U, p, f, top, 2.0, cache) != \
                        naive_stopping_children(U, p, f, top, 2.0, cache):
                    stop_mismatch += 1
                if corona_children(U, p, f, top, 2.0, cache) != \
                        naive_corona_children(U, p, f, top, 2.0, cache):
                    stop_mismatch += 1
            checked += 1
    ok = worst <= 1e-12 and stop_mismatch == 0
    _verdict(
        capsys, 8, ok,
        f"{checked} grids <= 64 cells, worst operator gap {worst:.2e}, "
        f"stopping mismatches {stop_mismatch}",
    )


def test_criterion_9_scalar_carleson_lemma(capsys):
    rng = np.random.default_rng(9)
    shapes = ((1, 3), (1, 4), (2, 2), (2, 3), (1, 5))
    deltas = (0.1, 0.25, 0.5)
    suite_c = 0.0
    for i in range(100):
        d, N = shapes[i % len(shapes)]
        q = (1.5, 2.0, 3.0)[i % 3]
        delta = deltas[i % 3]
        grid = GridSpec(d, N, 1)
        f = CellField(grid, rng.standard_normal(grid.num_cells))
        tau = {}
        for cube in grid.all_cubes():
            if rng.random() < 0.4:
                tau[cube] = float(rng.uniform(0.0, 1.0)) * cube.measure
        if not tau:
            tau[grid.top()] = 1.0
        lhs, star, fq = scalar_carleson_embedding_check(tau, f, q)
        suite_c = max(suite_c, lhs * delta / (star * fq))
    ok = suite_c <= 8.0
    _verdict(capsys, 9, ok, f"100 runs, suite-wide C = {suite_c:.3f} <= 8")
