import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homg.calib import CalibrationModel, StripGeometry, plan_strips
from homg.features import (
    SegFeature,
    column_histograms,
    count_feature,
    feature_length,
    features_from_columns,
    histogram,
    n_cells,
    seg_feature,
    strip_window_features,
    window_starts,
)
from homg.motion import MotionField


def random_motion(rng, h, w, n_bins=8, density=0.5):
    E = rng.uniform(0, 100, (h, w)) * (rng.random((h, w)) < density)
    O = rng.integers(0, n_bins, (h, w)).astype(np.uint8)
    return MotionField(E, O)


def test_default_feature_length_is_91():
    assert n_cells(8) == 10
    assert feature_length(8, 10) == 91
    m = MotionField(np.zeros((20, 40)), np.zeros((20, 40), np.uint8))
    assert seg_feature(m, 0, 20).vector().shape == (91,)


def test_single_pixel_histogram():
    E = np.zeros((3, 3))
    O = np.zeros((3, 3), np.uint8)
    E[1, 1], O[1, 1] = 5.0, 3
    h = histogram(MotionField(E, O), (0, 0, 3, 3), 8)
    assert h.tolist() == [0, 0, 0, 5, 0, 0, 0, 0]


def test_zero_motion_gives_zero_features():
    m = MotionField(np.zeros((19, 30)), np.zeros((19, 30), np.uint8))
    assert not seg_feature(m, 4, 19).vector().any()
    _, X = strip_window_features(m, 19, 2)
    assert not X.any()


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_histogram_matches_pixel_loop_and_is_additive(seed):
    rng = np.random.default_rng(seed)
    h, w = int(rng.integers(1, 15)), int(rng.integers(2, 20))
    m = random_motion(rng, h, w)
    x0, x1 = sorted(rng.integers(0, w + 1, 2))
    y0, y1 = sorted(rng.integers(0, h + 1, 2))
    hist = histogram(m, (x0, y0, x1, y1), 8)
    oracle = np.zeros(8)
    for i in range(y0, y1):
        for j in range(x0, x1):
            oracle[m.O[i, j]] += m.E[i, j]
    assert np.allclose(hist, oracle, rtol=1e-12, atol=1e-9)
    assert hist.sum() == pytest.approx(m.E[y0:y1, x0:x1].sum(), rel=1e-12, abs=1e-9)
    xm = int(rng.integers(x0, x1 + 1))
    parts = histogram(m, (x0, y0, xm, y1), 8) + histogram(m, (xm, y0, x1, y1), 8)
    assert np.allclose(parts, hist, rtol=1e-12, atol=1e-9)


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_feature_identities(seed):
    rng = np.random.default_rng(seed)
    m = random_motion(rng, int(rng.integers(5, 25)), int(rng.integers(10, 60)))
    h_k = m.E.shape[0]
    f = seg_feature(m, int(rng.integers(-5, m.E.shape[1])), h_k)
    assert np.allclose(f.s, f.h.sum(axis=1), rtol=1e-9, atol=0)
    assert f.t == pytest.approx(f.s.sum(), rel=1e-9)
    # the layout is cell-major, then bins, then per-cell totals, then the total
    v = f.vector()
    g = SegFeature.from_vector(v, 8, 10)
    assert np.array_equal(g.h, f.h) and np.array_equal(g.s, f.s) and g.t == f.t


@given(st.integers(0, 10_000), st.integers(1, 40))
@settings(max_examples=30, deadline=None)
def test_doubling_height_halves_every_component(seed, h_k):
    rng = np.random.default_rng(seed)
    m = random_motion(rng, 12, 30)
    a = seg_feature(m, 3, h_k).vector()
    b = seg_feature(m, 3, 2 * h_k).vector()
    assert np.array_equal(b, a / 2)


def test_window_past_edge_is_zero_padded():
    rng = np.random.default_rng(2)
    m = random_motion(rng, 8, 12, density=1.0)
    f = seg_feature(m, 7, 8)
    assert not f.h[5:].any()
    assert np.allclose(f.s[:5], m.E[:, 7:12].sum(axis=0) / 8)


def test_sliding_windows_match_single_window_features():
    rng = np.random.default_rng(3)
    m = random_motion(rng, 19, 53)
    starts, X = strip_window_features(m, 19, stride=2)
    assert starts[0] == 0 and starts[-1] == 53 - 10
    assert np.all(np.diff(starts) > 0) and np.all(np.diff(starts)[:-1] == 2)
    for s, x in zip(starts, X):
        assert np.allclose(x, seg_feature(m, int(s), 19).vector(), rtol=1e-12, atol=1e-12)


def test_window_starts_narrow_strip():
    assert window_starts(6, 10, 2).tolist() == [0]
    assert window_starts(10, 10, 3).tolist() == [0]
    assert window_starts(13, 10, 2).tolist() == [0, 2, 3]
    with pytest.raises(ValueError):
        window_starts(20, 10, 0)


def test_features_from_columns_pads_on_the_right():
    col = np.ones((4, 2))
    X = features_from_columns(col, np.array([0]), 6, 1)
    assert X.shape == (1, 2 * 6 + 6 + 1)
    assert X[0, -1] == 8.0


# -- crowd-region feature ------------------------------------------------------------


def count_feature_oracle(geoms, motions, mask):
    total = 0.0
    H, W = mask.shape
    for g, m in zip(geoms, motions):
        acc = 0.0
        for y in range(g.norm_height):
            sy = g.source_top_row + int(np.floor((y + 0.5) * g.source_height / g.norm_height))
            if not 0 <= sy < H:
                continue
            for x in range(g.norm_width):
                sx = min(int(np.floor((x + 0.5) * W / g.norm_width)), W - 1)
                if mask[sy, sx]:
                    acc += m.E[y, x]
        total += acc / g.norm_height
    return total


def test_empty_mask_gives_zero():
    g = StripGeometry(9, 0, 10, 1.0, 10, 20, 20)
    m = MotionField(np.ones((10, 20)), np.zeros((10, 20), np.uint8))
    assert count_feature([g], [m], np.zeros((10, 20), bool)) == 0.0


def test_full_mask_single_strip():
    g = StripGeometry(9, 0, 10, 1.0, 10, 20, 20)
    E = np.zeros((10, 20))
    E[2, 3], E[7, 11] = 200.0, 300.0
    m = MotionField(E, np.zeros((10, 20), np.uint8))
    assert count_feature([g], [m], np.ones((10, 20), bool)) == 50.0


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_count_feature_matches_pixel_oracle_and_is_monotone(seed):
    rng = np.random.default_rng(seed)
    H, W = 60, 48
    cal = CalibrationModel(float(rng.uniform(-120, -20)), H - 1.0, float(rng.uniform(8, 20)), 30.0)
    geoms = plan_strips(cal, (H, W))
    motions = [random_motion(rng, g.norm_height, g.norm_width) for g in geoms]
    mask = rng.random((H, W)) < 0.3
    R = count_feature(geoms, motions, mask)
    assert R == pytest.approx(count_feature_oracle(geoms, motions, mask), rel=1e-12)
    bigger = mask | (rng.random((H, W)) < 0.2)
    assert count_feature(geoms, motions, bigger) >= R


def test_column_histograms_sum_to_column_energy():
    rng = np.random.default_rng(9)
    m = random_motion(rng, 7, 15)
    col = column_histograms(m, 8)
    assert col.shape == (15, 8)
    assert np.allclose(col.sum(axis=1), m.E.sum(axis=0))
