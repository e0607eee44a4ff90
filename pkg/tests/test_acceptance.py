"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
one PASS/FAIL line per criterion. The cross-view experiments (criteria 4-7)
share one six-view synthetic dataset and take several minutes.
"""

import csv
import math
import time

import numpy as np
import pytest

from homg.calib import CalibrationModel
from homg.cli import main
from homg.count import CountModel
from homg.features import feature_length, n_cells, seg_feature
from homg.metrics import count_metrics, pr_ap
from homg.motion import KeyframeBuffer, MotionField, TemporalConfig, moving_gradient, sobel
from homg.pipeline import GRADIENTS_FIRST, NORMALIZED_FIRST, CameraPipeline, PipelineConfig
from homg.seg import SegModel
from homg.synth import SceneSpec, multi_view_specs, render
from homg.training import TrainSettings, ViewData, collect_view_motion, leave_one_view_out, train_segmentation

# one-second recent slot, keyframes every 2 s, four of them
TEMPORAL = TemporalConfig(a0_seconds=1.0, keyframe_spacing_K=2.0, keyframe_count_l=4)
KX = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


def config(mode=NORMALIZED_FIRST):
    return PipelineConfig(temporal=TEMPORAL, mode=mode)


# -- shared cross-view experiment -------------------------------------------------------


@pytest.fixture(scope="module")
def views():
    specs = multi_view_specs(6, seed=0, n_frames=280, annotate_every=3, annotate_from=8)
    return [ViewData.from_render(render(s), f"v{k + 1}") for k, s in enumerate(specs)]


@pytest.fixture(scope="module")
def reports(views):
    out = {}
    for mode in (NORMALIZED_FIRST, GRADIENTS_FIRST):
        cfg = config(mode)
        vms = [collect_view_motion(v, cfg) for v in views]
        out[mode] = leave_one_view_out(vms, cfg, TrainSettings())
    return out


@pytest.fixture(scope="module")
def fold_model(reports):
    return reports[NORMALIZED_FIRST].folds[0]


# -- 1 ----------------------------------------------------------------------------------


def test_c01_static_scene_is_null(fold_model, verdict):
    fps = 5.0
    warm = int(math.ceil(TEMPORAL.a0_seconds * fps))
    spec = SceneSpec(n_frames=warm + 200, schedule=[0] * (warm + 200), distractor=None, seed=11)
    scene = render(spec)
    pipe = CameraPipeline(scene.calibration, config(), fold_model.seg_model, fold_model.count_model)
    t0 = time.perf_counter()
    results = []
    energy = 0.0
    for i, f in enumerate(scene.frames):
        r = pipe.process_frame(f, i / fps, i)
        if r is not None:
            results.append(r)
            energy += sum(float(m.E.sum()) for m in pipe.last_motions)
    elapsed = time.perf_counter() - t0
    null = (energy == 0.0 and all(not r.C.any() and not r.mask.any() and r.R == 0.0 and r.y_hat == 0.0
                                  for r in results))
    ok = len(results) == 200 and null and elapsed < 10.0
    verdict(1, ok, f"static null: {len(results)} frames, all zero={null}, {elapsed:.2f}s (< 10s)")
    assert ok


# -- 2 ----------------------------------------------------------------------------------


def sobel_oracle(img):
    p = np.pad(img.astype(np.float64), 1, mode="edge")
    h, w = img.shape
    ex, ey = np.zeros((h, w)), np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            win = p[i:i + 3, j:j + 3]
            ex[i, j] = float((win * KX).sum())
            ey[i, j] = float((win * KX.T).sum())
    return ex, ey


def reference_schedule(times, a0, K, l, eps=1e-9):
    """For each ready frame, the indices of every frame it is compared against."""
    start, recent, keys, out = times[0], 0, [], []
    for i, t in enumerate(times[1:], start=1):
        if t - start >= a0 - eps:
            out.append((i, [recent] + keys))
        newest = times[keys[-1]] if keys else start
        if t - newest >= K - eps:
            keys = (keys + [i])[-l:]
        if t - times[recent] >= a0 - eps:
            recent = i
    return out


def brute_motion(cur, refs, T1, T2, N):
    cx_all, cy_all = cur
    h, w = cx_all.shape
    E = np.zeros((h, w))
    O = np.zeros((h, w), dtype=np.int64)
    for i in range(h):
        for j in range(w):
            cx, cy = cx_all[i, j], cy_all[i, j]
            ds = []
            for rx_all, ry_all in refs:
                rx, ry = rx_all[i, j], ry_all[i, j]
                if math.hypot(cx, cy) > math.hypot(rx, ry):
                    ds.append(math.hypot(cx - rx, cy - ry))
                else:
                    ds.append(0.0)
            ds.sort()
            E[i, j] = min(max(0.0, ds[(len(ds) - 1) // 2] - T1), T2)
            O[i, j] = min(int(math.floor(N * (math.atan2(cy, cx) + math.pi) / (2 * math.pi))), N - 1)
    return E, O


def test_c02_moving_gradient_matches_brute_force(verdict):
    fps = 5.0
    spec = SceneSpec(width=160, height=120, calibration=CalibrationModel(-80.0, 119.0, 14.0, 36.0),
                     n_frames=52, max_count=6, seed=21)
    frames = [f[60:100, 40:104] for f in render(spec).frames]
    times = [i / fps for i in range(len(frames))]
    fields = [sobel_oracle(f) for f in frames]
    mismatches, checked = 0, 0
    for T1 in (10.0, 20.0, 40.0):
        for T2 in (80.0, 120.0, 240.0):
            cfg = TemporalConfig(a0_seconds=0.4, keyframe_spacing_K=1.0, keyframe_count_l=3, T1=T1, T2=T2)
            schedule = dict(reference_schedule(times, cfg.a0_seconds, cfg.keyframe_spacing_K, cfg.keyframe_count_l))
            buf = KeyframeBuffer(cfg)
            for i, f in enumerate(frames):
                g = sobel(f)
                if buf.is_ready(times[i]):
                    m = moving_gradient(g, buf, cfg, timestamp=times[i])
                    E, O = brute_motion(fields[i], [fields[k] for k in schedule[i]], T1, T2, cfg.orientation_bins_N)
                    checked += 1
                    if not (np.array_equal(m.E, E) and np.array_equal(m.O.astype(np.int64), O)):
                        mismatches += 1
                buf.advance(g, times[i])
    ok = checked == 9 * 50 and mismatches == 0
    verdict(2, ok, f"moving-gradient oracle: {checked} frames over 9 (T1, T2) pairs, {mismatches} mismatches")
    assert ok


# -- 3 ----------------------------------------------------------------------------------


def test_c03_feature_shape_and_identities(verdict):
    rng = np.random.default_rng(3)
    worst_s, worst_t, halving = 0.0, 0.0, True
    for _ in range(200):
        h, w = int(rng.integers(4, 30)), int(rng.integers(8, 60))
        E = rng.uniform(0, 120, (h, w)) * (rng.random((h, w)) < 0.5)
        m = MotionField(E, rng.integers(0, 8, (h, w)).astype(np.uint8))
        x0, h_k = int(rng.integers(-4, w)), int(rng.integers(1, 40))
        f = seg_feature(m, x0, h_k)
        scale = max(abs(f.t), 1e-300)
        worst_s = max(worst_s, float(np.max(np.abs(f.s - f.h.sum(axis=1)))) / scale)
        worst_t = max(worst_t, abs(f.t - float(f.s.sum())) / scale)
        halving &= bool(np.array_equal(seg_feature(m, x0, 2 * h_k).vector(), f.vector() / 2))
    m = MotionField(np.zeros((16, 40)), np.zeros((16, 40), np.uint8))
    length = seg_feature(m, 0, 16).vector().shape[0]
    ok = (length == 91 == feature_length(8, n_cells(8)) and worst_s <= 1e-9 and worst_t <= 1e-9 and halving)
    verdict(3, ok, f"feature length {length}; cell identity rel err {worst_s:.1e}, total {worst_t:.1e}; "
                   f"height halving exact={halving}")
    assert ok


# -- 4 ----------------------------------------------------------------------------------


def test_c04_counting_linearity_across_views(reports, verdict):
    rep = reports[NORMALIZED_FIRST]
    cov, r = rep.slope_cov, rep.pearson
    ok = cov <= 0.05 and r >= 0.95
    slopes = ", ".join(f"{s:.3g}" for s in rep.slopes)
    verdict(4, ok, f"slope CoV {cov:.4f} (<= 0.05), pooled Pearson {r:.4f} (>= 0.95); slopes [{slopes}]")
    assert ok


# -- 5 ----------------------------------------------------------------------------------


def test_c05_counting_accuracy_on_held_out_views(reports, views, verdict):
    rep = reports[NORMALIZED_FIRST]
    per_view = []
    for f in rep.folds:
        e = f.evaluation
        keep = [i for i, y in enumerate(e.truth) if 1 <= y <= 20]
        m = count_metrics([e.truth[i] for i in keep], [e.y_hat[i] for i in keep])
        per_view.append((f.held_out, m.mae, m.mde))
    mae = float(np.mean([v[1] for v in per_view]))
    mde = float(np.mean([v[2] for v in per_view]))

    # full-video inference on one held-out view, timed
    fold, view = rep.folds[0], views[0]
    pipe = CameraPipeline(view.calib, config(), fold.seg_model, fold.count_model)
    t0 = time.perf_counter()
    for i, frame in enumerate(view.frames):
        pipe.process_frame(frame, i / view.fps, i)
    elapsed = time.perf_counter() - t0

    ok = all(a <= 1.5 and d <= 0.30 for _, a, d in per_view) and elapsed < 120.0
    detail = ", ".join(f"{v}: {a:.2f}/{d:.3f}" for v, a, d in per_view)
    verdict(5, ok, f"every held-out view MAE <= 1.5 and MDE <= 0.30 (mean {mae:.3f}/{mde:.3f}), "
                   f"held-out run {elapsed:.1f}s (< 120s); per view MAE/MDE {detail}")
    assert ok


# -- 6 ----------------------------------------------------------------------------------


def test_c06_segmentation_quality(reports, verdict):
    folds = reports[NORMALIZED_FIRST].folds
    aps = [f.evaluation.ap for f in folds]
    clean = [f.evaluation.distractor_clean for f in folds]
    ap = float(np.mean(aps))
    ok_ap = ap >= 0.85
    ok_clean = min(clean) >= 0.95
    verdict(6, ok_ap and ok_clean,
            f"mean AP {ap:.3f} (>= 0.85) [{', '.join(f'{a:.3f}' for a in aps)}]; "
            f"distractor-clean frames min {min(clean):.3f} (>= 0.95)")
    assert ok_clean, "distractor region leaks into the mask"
    assert ok_ap, f"mean AP {ap:.3f} below 0.85"


# -- 7 ----------------------------------------------------------------------------------


def test_c07_ablation_direction(reports, verdict):
    a, b = reports[NORMALIZED_FIRST], reports[GRADIENTS_FIRST]
    ok = b.slope_cov > a.slope_cov and a.pearson - b.pearson >= 0.05
    verdict(7, ok, f"gradients-first CoV {b.slope_cov:.4f} vs {a.slope_cov:.4f}; "
                   f"Pearson {b.pearson:.4f} vs {a.pearson:.4f} (gap {a.pearson - b.pearson:.4f} >= 0.05)")
    assert ok


# -- 8 ----------------------------------------------------------------------------------


def brute_ap(Cs, Gs):
    s = np.concatenate([c.ravel() for c in Cs])
    g = np.concatenate([x.ravel() for x in Gs]).astype(bool)
    pts = []
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        tp = int(np.sum(pred & g))
        pts.append((tp / g.sum(), tp / int(pred.sum())))
    ap, prev = 0.0, 0.0
    for r, _ in pts:
        ap += (r - prev) * max(p for rr, p in pts if rr >= r)
        prev = r
    return ap


def test_c08_metrics(verdict):
    cases = [
        (([2, 4], [3, 3]), (1.0, 1.0, 0.375)),
        (([0, 0, 5], [2, 1, 4]), (4 / 3, 2.0, 0.2)),
        (([1, 10, 3], [1, 12, 0]), (5 / 3, 13 / 3, (0.2 + 1.0) / 3)),
    ]
    hand = all(abs(m.mae - e[0]) <= 1e-12 and abs(m.mse - e[1]) <= 1e-12 and abs(m.mde - e[2]) <= 1e-12
               for (y, yh), e in cases for m in [count_metrics(y, yh)])
    rng = np.random.default_rng(8)
    worst_oracle, worst_mono = 0.0, 0.0
    for _ in range(60):
        h, w, n = int(rng.integers(1, 65)), int(rng.integers(1, 65)), int(rng.integers(1, 3))
        Cs = [np.round(rng.random((h, w)) * int(rng.integers(1, 20)), 1) for _ in range(n)]
        Gs = [rng.random((h, w)) < rng.uniform(0.05, 0.6) for _ in range(n)]
        Gs[0].flat[0] = True
        base = pr_ap(Cs, Gs).ap
        worst_oracle = max(worst_oracle, abs(base - brute_ap(Cs, Gs)))
        for f in (lambda x: 3 * x + 7, np.exp, lambda x: x ** 3):
            worst_mono = max(worst_mono, abs(pr_ap([f(c) for c in Cs], Gs).ap - base))
    ok = hand and worst_oracle <= 1e-12 and worst_mono <= 1e-12
    verdict(8, ok, f"hand cases exact={hand}; AP oracle max diff {worst_oracle:.1e}; "
                   f"monotone-transform max diff {worst_mono:.1e}")
    assert ok


# -- 9 ----------------------------------------------------------------------------------


def test_c09_throughput(fold_model, tmp_path, verdict):
    model = fold_model.seg_model
    model.metadata["pipeline"] = config().to_dict()
    path = tmp_path / "seg.json"
    model.save(path)
    out = tmp_path / "bench.csv"
    assert main(["bench", "--width", "640", "--height", "480", "--n-frames", "100", "--seg-model", str(path),
                 "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        fps = float(next(csv.DictReader(fh))["fps"])
    ok = fps >= 10.0
    verdict(9, ok, f"640x480 single-threaded {fps:.1f} FPS (>= 10); 55 FPS target "
                   f"{'met' if fps >= 55 else 'not met'} (reported only)")
    assert ok


# -- 10 ---------------------------------------------------------------------------------


def test_c10_determinism_and_persistence(tmp_path, verdict):
    specs = multi_view_specs(2, seed=5, n_frames=40, annotate_every=2, annotate_from=1.2)
    cfg = config()
    settings = TrainSettings(rounds=30)
    files, masks = [], []
    for k in range(2):
        vs = [ViewData.from_render(render(s), f"v{j}") for j, s in enumerate(specs)]
        vms = [collect_view_motion(v, cfg) for v in vs]
        model = train_segmentation(vms, cfg, settings)
        path = tmp_path / f"seg{k}.json"
        model.save(path)
        files.append(path.read_bytes())
        pipe = CameraPipeline(vs[0].calib, cfg, model)
        run = []
        for i, f in enumerate(vs[0].frames):
            r = pipe.process_frame(f, i / vs[0].fps, i)
            if r is not None:
                run.append(r.mask)
        masks.append(run)
    same_model = files[0] == files[1]
    same_masks = len(masks[0]) == len(masks[1]) and all(np.array_equal(a, b) for a, b in zip(*masks))

    model = SegModel.load(tmp_path / "seg0.json")
    back_path = tmp_path / "again.json"
    model.save(back_path)
    back = SegModel.load(back_path)
    X = np.random.default_rng(10).uniform(0, 50, (1000, model.n_features))
    same_scores = np.array_equal(model.decision_function(X), back.decision_function(X))
    cnt = CountModel(0.0037123456789)
    cnt.save(tmp_path / "c.json")
    R = np.random.default_rng(11).uniform(0, 6000, 1000)
    same_counts = np.array_equal(CountModel.load(tmp_path / "c.json").predict(R), cnt.predict(R))

    ok = same_model and same_masks and same_scores and same_counts
    verdict(10, ok, f"identical model files={same_model}, masks={same_masks}; round-trip scores "
                    f"bit-exact={same_scores}, counts={same_counts}")
    assert ok
