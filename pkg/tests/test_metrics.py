import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from multiverse import (AccuracyQuery, CommCostModel, ConfigError, EmptyInputError,
                        GroundTruthSet, InclusionModel, LatencyBudget, NonPositiveBaselineError,
                        ShapeMismatchError, UnknownTwinError, acc_grid, acc_kt, downlink_ms,
                        fit_inclusion_model, improvement_vs_exhaustive, inclusion_heatmap,
                        multiverse_latency, threshold_set)
from multiverse.metrics import finite_or_none, latency_report, write_heatmap_csv
from multiverse.selector import _Axis

import oracles
from helpers import random_batch, table

LINEAR = CommCostModel()
REFERENCE = LatencyBudget(downlink_ms=0.1292, solve_ms=0.023, sweep=LINEAR, exhaustive_ms=1.27)


# -- threshold sets -------------------------------------------------------------


def test_threshold_set_examples():
    assert threshold_set([10.0, 8.0, 3.0], 0.0) == [0]
    assert threshold_set([10.0, 8.0, 3.0], 2.0) == [0, 1]
    assert threshold_set([10.0, 8.0, 3.0], math.inf) == [0, 1, 2]
    assert threshold_set([-np.inf, 1.0, -np.inf], math.inf) == [1]
    assert threshold_set([-np.inf, -np.inf], 1.0) == []
    with pytest.raises(EmptyInputError):
        threshold_set([], 0.0)


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-50, 50)), st.floats(0, 30))
def test_threshold_set_contains_argmax(v, T):
    g = threshold_set(v, T)
    assert int(np.argmax(v)) in g
    assert g == sorted(m for m in range(len(v)) if v[m] >= v.max() - T)


# -- accuracy ---------------------------------------------------------------------


def test_acc_self_consistency():
    gt = np.random.default_rng(0).normal(size=(30, 8))
    for K in (1, 3, 8):
        for T in (0.0, 1.0):
            assert acc_kt(gt, gt, AccuracyQuery(K, T)) == 1.0


def test_acc_one_hit_one_miss():
    gt = np.array([[1.0, 0.0], [1.0, 0.0]])
    pred = np.array([[5.0, 0.0], [0.0, 5.0]])
    assert acc_kt(gt, pred, AccuracyQuery(1, 0.0)) == 0.5
    assert acc_kt(gt, pred, AccuracyQuery(2, 0.0)) == 1.0


def test_acc_shape_mismatch_and_query():
    with pytest.raises(ShapeMismatchError):
        acc_kt(np.zeros((2, 3)), np.zeros((3, 3)), AccuracyQuery(1))
    with pytest.raises(ShapeMismatchError):
        acc_kt(np.zeros((2, 3)), np.zeros((2, 4)), AccuracyQuery(1))
    with pytest.raises(EmptyInputError):
        acc_kt(np.zeros((0, 3)), np.zeros((0, 3)), AccuracyQuery(1))
    with pytest.raises(ConfigError):
        AccuracyQuery(0)
    with pytest.raises(ConfigError):
        AccuracyQuery(1, -0.5)


def test_acc_ignores_unpredicted_beams():
    gt = np.array([[3.0, 1.0, 0.0]])
    pred = np.array([[-np.inf, 0.0, -np.inf]])
    assert acc_kt(gt, pred, AccuracyQuery(3, 0.0)) == 0.0
    assert acc_kt(gt, pred, AccuracyQuery(3, 2.0)) == 1.0


@pytest.mark.parametrize("seed", range(20))
def test_acc_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    gt, pred = random_batch(rng)
    for K in (1, 2, 5, 10):
        for T in (0.0, 1.0, 2.0, 5.0):
            assert acc_kt(gt, pred, AccuracyQuery(K, T)) == \
                pytest.approx(oracles.acc_double_loop(gt, pred, K, T), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_acc_monotone_in_k_and_t(seed):
    gt, pred = random_batch(np.random.default_rng(seed))
    B = gt.shape[1]
    grid = [[acc_kt(gt, pred, AccuracyQuery(K, T)) for T in (0.0, 0.5, 1.0, 3.0)]
            for K in range(1, B + 1)]
    a = np.array(grid)
    assert np.all(np.diff(a, axis=0) >= 0)
    assert np.all(np.diff(a, axis=1) >= 0)


def test_acc_grid_keys():
    gt = np.random.default_rng(1).normal(size=(5, 12))
    g = acc_grid(gt, gt)
    assert sorted(g) == sorted(f"K={k},T={t}" for k in (1, 5, 10) for t in (0, 1, 2))
    assert set(g.values()) == {1.0}


# -- latency ----------------------------------------------------------------------


def test_reference_latency():
    # the per-beam sweep time is 1.27 / 34 ms; the four-digit reference figures are truncated
    assert multiverse_latency(REFERENCE, 1) == pytest.approx(0.1895, abs=1e-4)
    assert multiverse_latency(REFERENCE, 12) == pytest.approx(0.6004, abs=1e-4)


def test_reference_improvement():
    lo = improvement_vs_exhaustive(multiverse_latency(REFERENCE, 1), 1.27)
    hi = improvement_vs_exhaustive(multiverse_latency(REFERENCE, 12), 1.27)
    assert 85.07 - 0.01 <= lo <= 85.08 + 0.01
    assert hi == pytest.approx(52.72, abs=0.01)
    assert improvement_vs_exhaustive(0.1895, 1.27) == pytest.approx(85.08, abs=0.01)
    assert improvement_vs_exhaustive(0.6004, 1.27) == pytest.approx(52.72, abs=0.01)
    assert improvement_vs_exhaustive(1.27, 1.27) == 0.0
    with pytest.raises(NonPositiveBaselineError):
        improvement_vs_exhaustive(0.1, 0.0)


def test_zero_budget_is_sweep_only():
    b = LatencyBudget(downlink_ms=0.0, solve_ms=0.0)
    assert multiverse_latency(b, 1) == LINEAR.per_beam
    with pytest.raises(ConfigError):
        LatencyBudget(downlink_ms=-1.0)


def test_downlink_time():
    # a 200 x 34 float32 table over the 5 GHz control link
    assert downlink_ms(27_200) == pytest.approx(0.1256, abs=1e-4)
    assert downlink_ms(0) == 0.0
    with pytest.raises(ConfigError):
        downlink_ms(10, 0.0)


def test_latency_report_rows():
    rows = latency_report(REFERENCE)
    assert [r["K"] for r in rows] == [1, 12]
    assert rows[0]["improvement_pct"] > rows[1]["improvement_pct"]
    json.dumps(rows)


@given(st.floats(0, 10), st.floats(0.001, 5), st.floats(0.01, 10))
def test_improvement_strictly_decreasing(lat, step, base):
    assert improvement_vs_exhaustive(lat + step, base) < improvement_vs_exhaustive(lat, base)


def test_finite_or_none():
    assert finite_or_none(1.5) == 1.5
    assert finite_or_none(-math.inf) is None


# -- heatmaps -----------------------------------------------------------------------


def test_perfect_twin_heatmap_all_ones():
    snr = np.random.default_rng(2).normal(size=(40, 6))
    lt = table("T", snr)
    gt = GroundTruthSet(np.arange(40), ["s"] * 40, lt.grid.points, snr)
    model = fit_inclusion_model(gt, [lt], 2.5, smoothing=0.0)
    rows = inclusion_heatmap(model, "T", "s", 1)
    assert [r for r, _ in rows] == list(range(4))
    assert all(p == 1.0 for _, p in rows)


def test_two_region_fixture():
    m = InclusionModel(region_width=5.0, smoothing=0.0)
    m.axes[("T", "s")] = _Axis((0.0, 0.0, 1.5), (1.0, 0.0, 0.0), 2)
    m.bins[("T", "s", 0)] = np.array([0.2, 0.5])
    m.bins[("T", "s", 1)] = np.array([0.8, 0.9])
    assert inclusion_heatmap(m, "T", "s", 1) == [(0, 0.2), (1, 0.8)]
    with pytest.raises(UnknownTwinError):
        inclusion_heatmap(m, "nope", "s", 1)
    with pytest.raises(UnknownTwinError):
        inclusion_heatmap(m, "T", "other", 1)


def test_heatmap_csv(tmp_path):
    m = InclusionModel(region_width=5.0, smoothing=0.0)
    m.axes[("T", "s")] = _Axis((0.0, 0.0, 1.5), (1.0, 0.0, 0.0), 2)
    m.bins[("T", "s", 0)] = np.array([0.2, 0.5])
    m.bins[("T", "s", 1)] = np.array([0.8, 0.9])
    write_heatmap_csv(m, ["T"], "s", [1, 2], tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "twin_id,scenario_id,K,region_index,probability"
    assert lines[1:] == ["T,s,1,0,0.2", "T,s,1,1,0.8", "T,s,2,0,0.5", "T,s,2,1,0.9"]
