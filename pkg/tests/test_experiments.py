"""Experiment orchestration, reports, and report persistence."""
import csv
import json

import numpy as np
import pytest

from mwsf.experiments import (
    EnsembleConfig,
    SUITE_SLACK,
    emit_report,
    john_constant,
    load_report,
    member_configs,
    run_domination_experiment,
    run_norm_bound_experiment,
    run_sharpness_scan,
    theoretical_bound,
)
from mwsf.generators import WeightFamilySpec, generate_weight
from mwsf.grid import GridSpec
from mwsf.weights import MatrixWeightField


def test_john_constant():
    assert john_constant(1, tol=0.0) == pytest.approx(1.0)
    assert john_constant(2, tol=1e-3) == pytest.approx(2 * 1.001 ** 2)


def test_member_configs_deterministic_and_cycled():
    config = EnsembleConfig(seed=3, members=10)
    a = member_configs(config)
    b = member_configs(config)
    assert [m.weight_seed for m in a] == [m.weight_seed for m in b]
    assert a[0].label() == a[8].label()  # 8 shapes cycle
    assert a[0].weight_seed != a[8].weight_seed


def test_theoretical_bound_identity_weights():
    grid = GridSpec(1, 3, 2)
    I = MatrixWeightField.identity(grid)
    for p in (1.5, 2.0, 3.0):
        bound, pieces = theoretical_bound(I, I, p)
        assert bound == pytest.approx(1.0, rel=1e-10)
        assert pieces["ap"] == pytest.approx(1.0, rel=1e-10)


def test_theoretical_bound_p_gt_2_carries_forward_factor():
    grid = GridSpec(1, 3, 2)
    U = generate_weight(WeightFamilySpec(grid, seed=1))
    V = generate_weight(WeightFamilySpec(grid, seed=2))
    _, pieces2 = theoretical_bound(U, V, 2.0)
    _, pieces3 = theoretical_bound(U, V, 3.0)
    assert pieces2["apwk_forward"] == 0.0
    assert pieces3["apwk_forward"] > 0.0


def test_small_domination_experiment_passes():
    report = run_domination_experiment(EnsembleConfig(seed=2, members=4))
    assert len(report.members) == 4
    assert report.skipped_members == 0
    for m in report.members:
        assert m.sparse_ok
        assert np.isfinite(m.domination_max_ratio)
        assert m.corona_packing <= 0.25
        assert m.star_norm <= m.star_bound
    data = report.to_dict()
    assert data["experiment"] == "domination"
    assert len(data["members"]) == 4


def test_small_norm_bound_experiment_passes():
    report = run_norm_bound_experiment(EnsembleConfig(seed=2, members=3))
    assert report.all_pass
    assert report.witness is None
    for m in report.members:
        assert m.estimate <= m.slack * m.bound
        assert m.slack == pytest.approx(SUITE_SLACK * john_constant(m.config.n))


def test_sharpness_identity_sweep_flat():
    grid = GridSpec(1, 3, 1)
    report = run_sharpness_scan(
        EnsembleConfig(seed=1), grid, 2.0, alphas=(0.0, 0.0, 0.0)
    )
    # degenerate sweep: identical characteristics, slope defined as 0
    assert report.slope == pytest.approx(0.0, abs=0.1)
    assert all(pt.characteristic == pytest.approx(1.0) for pt in report.points)


def test_sharpness_scalar_sweep_reports_slope():
    grid = GridSpec(1, 4, 1)
    report = run_sharpness_scan(
        EnsembleConfig(seed=1), grid, 2.0, alphas=(0.2, 0.4, 0.6, 0.8)
    )
    assert len(report.points) == 4
    assert np.isfinite(report.slope)
    assert np.isfinite(report.slope_stderr)
    assert all(np.isfinite(pt.ratio) for pt in report.points)


def test_emit_and_load_report_round_trip(tmp_path):
    report = run_domination_experiment(EnsembleConfig(seed=4, members=2))
    written = emit_report(report, str(tmp_path))
    loaded = load_report(written["json"])
    assert loaded == json.loads(json.dumps(report.to_dict(), default=float))
    with open(written["csv"]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert "domination_max_ratio" in rows[0]


def test_emit_report_sharpness_plot_data(tmp_path):
    grid = GridSpec(1, 3, 1)
    report = run_sharpness_scan(EnsembleConfig(seed=1), grid, 2.0, alphas=(0.2, 0.4))
    written = emit_report(report, str(tmp_path))
    lines = open(written["plot"]).read().strip().splitlines()
    assert len(lines) == 2
    assert all(len(line.split()) == 2 for line in lines)
