"""Multi-view training and evaluation: datasets, negatives, folds, ablation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import count as count_mod
from . import seg as seg_mod
from .calib import CalibrationModel
from .count import CountModel
from .features import count_feature, feature_length, n_cells, strip_window_features
from .metrics import CountMetrics, PRCurve, coefficient_of_variation, count_metrics, gt_mask, pearson, pr_ap
from .motion import MotionField
from .pipeline import MODES, CameraPipeline, PipelineConfig
from .seg import SegModel, segment_frame, strip_source_rows, window_source_cols

log = logging.getLogger(__name__)


@dataclass
class ViewData:
    """Everything about one camera view that training and evaluation read."""

    view_id: str
    calib: CalibrationModel
    frames: Sequence[np.ndarray]
    fps: float
    annotations: Dict[int, List[Tuple[float, float]]]
    roi: Optional[np.ndarray] = None
    distractor: Optional[np.ndarray] = None

    @property
    def frame_shape(self) -> Tuple[int, int]:
        return tuple(self.frames[0].shape)

    @property
    def annotated_ids(self) -> List[int]:
        return sorted(self.annotations)

    @classmethod
    def from_render(cls, render, view_id: str) -> "ViewData":
        anns = {a.frame_id: list(a.heads) for a in render.annotations}
        return cls(view_id, render.calibration, render.frames, render.spec.fps, anns,
                   distractor=render.distractor_mask)

    @classmethod
    def from_entry(cls, entry) -> "ViewData":
        from .data import load_frames
        frames = [f.pixels for f in load_frames(entry.frames_dir, entry.fps)]
        anns = {a.frame_id: list(a.heads) for a in entry.load_annotations()}
        return cls(entry.view_id, entry.load_calibration(), frames, entry.fps, anns, roi=entry.load_roi())


@dataclass
class ViewMotion:
    """Motion fields of the annotated, post-warm-up frames of one view in one mode."""

    view: ViewData
    mode: str
    geometries: list
    lo: int
    motions: Dict[int, List[MotionField]]

    @property
    def frame_ids(self) -> List[int]:
        return sorted(self.motions)


@dataclass
class TrainSettings:
    rounds: int = 100
    train_cap: int = 50  # annotated frames per training view
    initial_neg_ratio: float = 2.0
    neg_pool_per_frame: int = 200
    neg_max_coverage: float = 0.2
    mining_rounds: int = 1
    mining_budget_ratio: float = 1.0  # mined negatives per positive
    epsilon: float = 0.5
    C_reg: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def collect_view_motion(view: ViewData, config: PipelineConfig,
                        frame_ids: Optional[Sequence[int]] = None) -> ViewMotion:
    """Stream a view through the motion stage, keeping the requested ready frames."""
    wanted = set(view.annotated_ids if frame_ids is None else frame_ids)
    last = max(wanted) if wanted else -1
    pipe = CameraPipeline(view.calib, config, frame_shape=view.frame_shape)
    kept: Dict[int, List[MotionField]] = {}
    for i, frame in enumerate(view.frames[:last + 1]):
        motions = pipe.compute_motion(frame, i / view.fps)
        if motions is not None and i in wanted:
            kept[i] = motions
    return ViewMotion(view, config.mode, pipe.geometries, pipe.lo, kept)


def _first_ids(vm: ViewMotion, cap: Optional[int]) -> List[int]:
    ids = vm.frame_ids
    return ids if cap is None else ids[:cap]


def window_coverage(geometries, starts_list, cells: int, mask: np.ndarray, lo: int) -> List[np.ndarray]:
    """Per strip, the fraction of each window's source rectangle covered by the mask."""
    H, W = mask.shape
    ii = np.zeros((H + 1, W + 1), dtype=np.int64)
    ii[1:, 1:] = np.cumsum(np.cumsum(mask, axis=0), axis=1)
    out = []
    for g, starts in zip(geometries, starts_list):
        r0, r1 = strip_source_rows(g, H, lo)
        c0, c1 = window_source_cols(g, starts, cells)
        area = (r1 - r0) * (c1 - c0)
        if r1 <= r0:
            out.append(np.zeros(len(starts)))
            continue
        hit = ii[r1, c1] - ii[r0, c1] - ii[r1, c0] + ii[r0, c0]
        out.append(np.where(area > 0, hit / np.maximum(area, 1), 0.0))
    return out


def frame_samples(vm: ViewMotion, fid: int, config: PipelineConfig,
                  max_coverage: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """(positives, clean negatives) for one annotated frame.

    Negatives are windows whose source rectangle lies mostly outside every
    annotated person's box (coverage at most ``max_coverage``; zero means untouched).
    """
    view = vm.view
    heads = view.annotations[fid]
    motions = vm.motions[fid]
    n_bins = config.temporal.orientation_bins_N
    cells = n_cells(config.w_p)
    pos, _ = seg_mod.positives_from_heads(heads, vm.geometries, motions, view.calib, config.w_p,
                                          n_bins, view.frame_shape)
    starts_list, feats = [], []
    for g, m in zip(vm.geometries, motions):
        starts, f = strip_window_features(m, g.norm_height, config.stride, n_bins, config.w_p)
        starts_list.append(starts)
        feats.append(f)
    G = gt_mask(heads, view.calib, view.frame_shape)
    cover = window_coverage(vm.geometries, starts_list, cells, G, vm.lo)
    neg = np.vstack([f[c <= max_coverage] for f, c in zip(feats, cover)])
    return pos, neg


def _seg_layout(config: PipelineConfig) -> dict:
    return seg_mod.default_layout(config.w_p, config.temporal.orientation_bins_N)


def choose_threshold(model: SegModel, vms: Sequence[ViewMotion], config: PipelineConfig,
                     cap: Optional[int]) -> Tuple[float, float]:
    """F1-optimal mask threshold over training frames, kept strictly positive."""
    Cs, Gs = [], []
    for vm in vms:
        for fid in _first_ids(vm, cap):
            s = segment_frame(model, vm.geometries, vm.motions[fid], vm.view.frame_shape,
                              stride=config.stride, threshold=np.inf, lo=vm.lo, early_exit=config.early_exit)
            Cs.append(s.C)
            Gs.append(gt_mask(vm.view.annotations[fid], vm.view.calib, vm.view.frame_shape))
    curve = pr_ap(Cs, Gs)
    thr, f1 = curve.best_f1()
    if thr <= 0:
        positive = curve.thresholds[curve.thresholds > 0]
        thr = float(positive.min()) if positive.size else 1.0
    return thr, f1


def train_segmentation(vms: Sequence[ViewMotion], config: PipelineConfig,
                       settings: TrainSettings = TrainSettings()) -> SegModel:
    """Boost on head-centred positives and random negatives, mine hard negatives, retrain."""
    rng = np.random.default_rng(settings.seed)
    pos_parts, pool_parts = [], []
    for vm in vms:
        for fid in _first_ids(vm, settings.train_cap):
            pos, neg = frame_samples(vm, fid, config, settings.neg_max_coverage)
            pos_parts.append(pos)
            if len(neg) > settings.neg_pool_per_frame:
                neg = neg[np.sort(rng.choice(len(neg), settings.neg_pool_per_frame, replace=False))]
            pool_parts.append(neg)
    d = feature_length(config.temporal.orientation_bins_N, n_cells(config.w_p))
    P = np.vstack(pos_parts) if pos_parts else np.zeros((0, d))
    pool = np.vstack(pool_parts) if pool_parts else np.zeros((0, d))
    if len(P) == 0 or len(pool) == 0:
        raise ValueError("training needs both annotated heads and head-free regions")

    n_init = min(len(pool), int(round(settings.initial_neg_ratio * len(P))))
    used = np.zeros(len(pool), dtype=bool)
    used[rng.choice(len(pool), n_init, replace=False)] = True
    layout = _seg_layout(config)

    def fit():
        N = pool[used]
        X = np.vstack([P, N])
        y = np.r_[np.ones(len(P)), -np.ones(len(N))]
        return seg_mod.train(X, y, settings.rounds, settings.seed, layout)

    t0 = time.perf_counter()
    model = fit()
    for _ in range(settings.mining_rounds):
        free = np.flatnonzero(~used)
        budget = int(round(settings.mining_budget_ratio * len(P)))
        hard = free[seg_mod.mine_negatives(model, pool[free], budget)]
        used[hard] = True
        model = fit()
    thr, f1 = choose_threshold(model, vms, config, settings.train_cap)
    model.threshold = thr
    model.metadata.update({"n_pos": int(len(P)), "n_neg": int(used.sum()), "train_f1": f1,
                           "views": [vm.view.view_id for vm in vms], "mode": config.mode,
                           "settings": settings.to_dict()})
    # timing goes to the log so model files stay byte-identical across runs
    log.info("segmentation trained in %.1fs", time.perf_counter() - t0)
    return model


def frame_R(model: SegModel, vm: ViewMotion, fid: int, config: PipelineConfig,
            threshold: Optional[float] = None):
    s = segment_frame(model, vm.geometries, vm.motions[fid], vm.view.frame_shape, stride=config.stride,
                      threshold=threshold, lo=vm.lo, early_exit=config.early_exit)
    return s, count_feature(vm.geometries, vm.motions[fid], s.mask)


def count_samples(model: SegModel, vms: Sequence[ViewMotion], config: PipelineConfig,
                  cap: Optional[int]) -> List[Tuple[float, float]]:
    """(R, true count) pairs with R measured inside the predicted crowd mask."""
    out = []
    for vm in vms:
        for fid in _first_ids(vm, cap):
            _, R = frame_R(model, vm, fid, config)
            out.append((R, float(len(vm.view.annotations[fid]))))
    return out


def train_counting(model: SegModel, vms: Sequence[ViewMotion], config: PipelineConfig,
                   settings: TrainSettings = TrainSettings()) -> CountModel:
    samples = count_samples(model, vms, config, settings.train_cap)
    return count_mod.fit(samples, settings.epsilon, settings.C_reg,
                         {"views": [vm.view.view_id for vm in vms], "mode": config.mode,
                          "seed": settings.seed})


@dataclass
class ViewEvaluation:
    view_id: str
    frame_ids: List[int]
    truth: List[int]
    R: List[float]
    y_hat: List[float]
    metrics: CountMetrics
    curve: Optional[PRCurve]
    distractor_clean: Optional[float] = None  # fraction of frames with no mask pixel in the distractor

    @property
    def ap(self) -> float:
        return float("nan") if self.curve is None else self.curve.ap


def evaluate_view(seg_model: SegModel, count_model: CountModel, vm: ViewMotion,
                  config: PipelineConfig, min_count: int = 0) -> ViewEvaluation:
    """Counting errors, pixelwise AP and distractor cleanliness on one view's annotated frames."""
    view = vm.view
    ids, truth, Rs, Cs, Gs, clean = [], [], [], [], [], []
    for fid in vm.frame_ids:
        s, R = frame_R(seg_model, vm, fid, config)
        heads = view.annotations[fid]
        Cs.append(s.C)
        Gs.append(gt_mask(heads, view.calib, view.frame_shape))
        if view.distractor is not None:
            clean.append(not np.any(s.mask & view.distractor))
        ids.append(fid)
        truth.append(len(heads))
        Rs.append(R)
    y_hat = [float(v) for v in count_model.predict(np.asarray(Rs))]
    keep = [i for i, t in enumerate(truth) if t >= min_count]
    metrics = count_metrics([truth[i] for i in keep], [y_hat[i] for i in keep])
    rois = None if view.roi is None else [view.roi] * len(Cs)
    try:
        curve = pr_ap(Cs, Gs, rois)
    except ValueError:
        curve = None
    return ViewEvaluation(view.view_id, ids, truth, Rs, y_hat, metrics, curve,
                          float(np.mean(clean)) if clean else None)


@dataclass
class FoldResult:
    held_out: str
    seg_model: SegModel
    count_model: CountModel
    evaluation: ViewEvaluation


@dataclass
class CrossViewReport:
    mode: str
    folds: List[FoldResult]
    pooled_R: List[float] = field(default_factory=list)
    pooled_truth: List[float] = field(default_factory=list)

    @property
    def slopes(self) -> List[float]:
        return [f.count_model.slope for f in self.folds]

    @property
    def slope_cov(self) -> float:
        return coefficient_of_variation(self.slopes)

    @property
    def pearson(self) -> float:
        return pearson(self.pooled_R, self.pooled_truth)


def leave_one_view_out(vms: Sequence[ViewMotion], config: PipelineConfig,
                       settings: TrainSettings = TrainSettings(),
                       held_out: Optional[Sequence[str]] = None) -> CrossViewReport:
    """Train on all views but one, evaluate on it, for each (or the listed) held-out view.

    Pooled R values are the held-out views' own measurements, so every
    frame contributes exactly once.
    """
    if len(vms) < 2:
        raise ValueError("leave-one-view-out needs at least two views")
    folds = []
    report = CrossViewReport(config.mode, folds)
    for vm in vms:
        vid = vm.view.view_id
        if held_out is not None and vid not in held_out:
            continue
        train = [v for v in vms if v.view.view_id != vid]
        seg = train_segmentation(train, config, settings)
        cnt = train_counting(seg, train, config, settings)
        ev = evaluate_view(seg, cnt, vm, config)
        log.info("fold %s: slope=%.4g mae=%.3f ap=%.3f", vid, cnt.slope, ev.metrics.mae, ev.ap)
        folds.append(FoldResult(vid, seg, cnt, ev))
        report.pooled_R.extend(ev.R)
        report.pooled_truth.extend(ev.truth)
    return report


def ablation(views: Sequence[ViewData], config: PipelineConfig,
             settings: TrainSettings = TrainSettings()) -> Dict[str, CrossViewReport]:
    """Leave-one-view-out in both pipeline modes on identical data."""
    out = {}
    for mode in MODES:
        cfg = config.with_mode(mode)
        vms = [collect_view_motion(v, cfg) for v in views]
        out[mode] = leave_one_view_out(vms, cfg, settings)
    return out
