import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homg.calib import CalibrationModel
from homg.metrics import (
    average_precision,
    coefficient_of_variation,
    count_metrics,
    gt_mask,
    pearson,
    pr_ap,
)


def naive_metrics(y, yh):
    n = len(y)
    mae = sum(abs(a - b) for a, b in zip(y, yh)) / n
    mse = sum((a - b) ** 2 for a, b in zip(y, yh)) / n
    rel = [abs(a - b) / a for a, b in zip(y, yh) if a != 0]
    return mae, mse, sum(rel) / len(rel) if rel else float("nan")


def brute_ap(Cs, Gs):
    """Every threshold evaluated from scratch; interpolated precision at each recall."""
    s = np.concatenate([c.ravel() for c in Cs])
    g = np.concatenate([x.ravel() for x in Gs]).astype(bool)
    pts = []
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        tp = int(np.sum(pred & g))
        fp = int(np.sum(pred & ~g))
        pts.append((tp / g.sum(), tp / (tp + fp)))
    ap, prev_r = 0.0, 0.0
    for r, _ in pts:
        p_interp = max(p for rr, p in pts if rr >= r)
        ap += (r - prev_r) * p_interp
        prev_r = r
    return ap


# -- counting errors ---------------------------------------------------------------


def test_hand_computed_example():
    m = count_metrics([2, 4], [3, 3])
    assert (m.mae, m.mse) == (1.0, 1.0)
    assert m.mde == pytest.approx(0.375, abs=1e-12)


def test_perfect_prediction():
    m = count_metrics([0, 3, 7], [0, 3, 7])
    assert m.mae == m.mse == m.mde == 0.0
    assert m.mde_excluded == 1


def test_zero_counts_excluded_from_mde():
    m = count_metrics([0, 0, 5], [2, 1, 4])
    assert m.mde == pytest.approx(0.2, abs=1e-12)
    assert m.mde_excluded == 2 and m.n == 3
    assert np.isnan(count_metrics([0], [1]).mde)


def test_errors():
    with pytest.raises(ValueError):
        count_metrics([], [])
    with pytest.raises(ValueError):
        count_metrics([1, 2], [1])


@given(st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_matches_naive_and_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 50))
    y = rng.integers(0, 21, n).astype(float)
    yh = rng.uniform(0, 25, n)
    m = count_metrics(y, yh)
    mae, mse, mde = naive_metrics(y.tolist(), yh.tolist())
    assert m.mae == pytest.approx(mae, abs=1e-12)
    assert m.mse == pytest.approx(mse, abs=1e-12)
    if np.isnan(mde):
        assert np.isnan(m.mde)
    else:
        assert m.mde == pytest.approx(mde, abs=1e-12)
    p = rng.permutation(n)
    q = count_metrics(y[p], yh[p])
    assert q.mae == pytest.approx(m.mae, abs=1e-12) and q.mse == pytest.approx(m.mse, abs=1e-12)


def test_pearson_and_cov():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert coefficient_of_variation([1.0, 3.0]) == pytest.approx(np.sqrt(2) / 2)


# -- ground-truth masks ---------------------------------------------------------------


@pytest.fixture
def cal():
    return CalibrationModel(-100.0, 119.0, 12.0, 30.0)


def test_no_heads_empty_mask(cal):
    assert not gt_mask([], cal, (120, 160)).any()


def test_single_head_area_is_box_area(cal):
    x0, y0, x1, y1 = cal.person_box(80.0, 40.0)
    m = gt_mask([(80.0, 40.0)], cal, (120, 160))
    assert m.sum() == (x1 - x0) * (y1 - y0)
    assert m[y0, (x0 + x1) // 2]


def test_box_is_clipped_at_frame_edge(cal):
    x0, y0, x1, y1 = cal.person_box(2.0, 40.0)
    m = gt_mask([(2.0, 40.0)], cal, (120, 160))
    assert x0 < 0 and m.sum() == x1 * (y1 - y0)


def test_overlapping_heads_union(cal):
    heads = [(60.0, 50.0), (65.0, 52.0)]
    areas = [gt_mask([h], cal, (120, 160)).sum() for h in heads]
    both = gt_mask(heads, cal, (120, 160))
    oracle = gt_mask(heads[:1], cal, (120, 160)) | gt_mask(heads[1:], cal, (120, 160))
    assert np.array_equal(both, oracle)
    assert both.sum() < sum(areas)


@given(st.lists(st.tuples(st.floats(0, 159), st.floats(0, 110)), max_size=6), st.tuples(st.floats(0, 159), st.floats(0, 110)))
@settings(max_examples=40, deadline=None)
def test_adding_a_head_never_shrinks_mask(heads, extra):
    cal = CalibrationModel(-100.0, 119.0, 12.0, 30.0)
    a = gt_mask(heads, cal, (120, 160))
    b = gt_mask(heads + [extra], cal, (120, 160))
    assert np.all(b >= a)


# -- precision/recall ----------------------------------------------------------------------


def test_perfect_separation_gives_one():
    G = np.zeros((8, 8), bool)
    G[2:5, 3:7] = True
    assert pr_ap([G * 2.0 + 0.1], [G]).ap == 1.0


def test_constant_score_gives_coverage_fraction():
    G = np.zeros((10, 10), bool)
    G[:3, :] = True
    c = pr_ap([np.full((10, 10), 0.7)], [G])
    assert c.ap == pytest.approx(0.3, abs=1e-12)
    assert c.precision.tolist() == [0.3] and c.recall.tolist() == [1.0]


def test_empty_ground_truth_is_an_error():
    with pytest.raises(ValueError, match="recall undefined"):
        pr_ap([np.ones((4, 4))], [np.zeros((4, 4), bool)])


def test_shape_mismatch():
    with pytest.raises(ValueError):
        pr_ap([np.ones((4, 4))], [np.ones((4, 5), bool)])


def test_roi_drops_pixels_from_both_sides():
    G = np.zeros((4, 4), bool)
    G[0] = True
    C = np.zeros((4, 4))
    C[0] = 1.0
    C[3] = 5.0  # false alarm hidden by the ROI
    roi = np.ones((4, 4), bool)
    roi[3] = False
    assert pr_ap([C], [G], [roi]).ap == 1.0
    assert pr_ap([C], [G]).ap < 1.0


@given(st.integers(0, 100_000), st.integers(1, 64), st.integers(1, 64), st.integers(1, 3))
@settings(max_examples=40, deadline=None)
def test_ap_matches_brute_force(seed, h, w, n):
    rng = np.random.default_rng(seed)
    Cs = [np.round(rng.random((h, w)) * int(rng.integers(1, 20)), 1) for _ in range(n)]
    Gs = [rng.random((h, w)) < rng.uniform(0.05, 0.6) for _ in range(n)]
    if not any(g.any() for g in Gs):
        Gs[0][0, 0] = True
    c = pr_ap(Cs, Gs)
    assert c.ap == pytest.approx(brute_ap(Cs, Gs), abs=1e-12)
    assert 0.0 <= c.ap <= 1.0


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_ap_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    C = rng.integers(0, 12, (20, 24)).astype(float)
    G = (C + rng.normal(0, 3, C.shape)) > 6
    G[0, 0] = True
    base = pr_ap([C], [G]).ap
    for f in (lambda x: 3 * x + 7, np.exp, lambda x: np.sqrt(x + 1), lambda x: x ** 3):
        assert pr_ap([f(C)], [G]).ap == pytest.approx(base, abs=1e-12)


def test_best_f1_picks_separating_threshold():
    G = np.array([[True, True, False, False]])
    C = np.array([[3.0, 2.0, 1.0, 0.0]])
    thr, f1 = pr_ap([C], [G]).best_f1()
    assert (thr, f1) == (2.0, 1.0)


def test_average_precision_envelope():
    # a dip in precision is filled in by the later higher value
    assert average_precision(np.array([1.0, 0.5, 0.75]), np.array([0.25, 0.5, 1.0])) == pytest.approx(
        0.25 * 1.0 + 0.25 * 0.75 + 0.5 * 0.75)
