"""Command-line interface: synthesis, training, inference, evaluation, benchmarking."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

import cv2
import numpy as np

from . import __version__
from .calib import CalibrationError, CalibrationModel
from .count import CountModel
from .data import DataError, DatasetManifest, iter_frames, load_annotations, write_float_pgm, write_mask
from .metrics import count_metrics, gt_mask, pr_ap
from .motion import TemporalConfig
from .pipeline import MODES, NORMALIZED_FIRST, CameraPipeline, PipelineConfig
from .seg import LayoutMismatch, SegModel

log = logging.getLogger("homg")


class UsageError(Exception):
    pass


# -- config handling --------------------------------------------------------------


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--w-p", type=int, help="normalized person width in pixels (default 8)")
    g.add_argument("--overlap", type=float, help="strip overlap fraction (default 0.5)")
    g.add_argument("--stride", type=int, help="window stride in normalized pixels (default 2)")
    g.add_argument("--a0", type=float, help="recent-reference age in seconds (default 1)")
    g.add_argument("--keyframe-spacing", type=float, help="keyframe spacing K in seconds (default 30)")
    g.add_argument("--keyframe-count", type=int, help="keyframes kept, l (default 4)")
    g.add_argument("--t1", type=float, help="lower truncation (default 20)")
    g.add_argument("--t2", type=float, help="upper truncation (default 120)")
    g.add_argument("--bins", type=int, help="orientation bins N (default 8)")
    g.add_argument("--mode", choices=MODES, help="normalization order (default normalized-first)")
    g.add_argument("--no-early-exit", action="store_true", help="always sum every tree")


def _config_from_args(args, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Flags override ``base`` (typically the config a model was trained with)."""
    cfg = (base or PipelineConfig()).to_dict()
    t = cfg["temporal"]
    for flag, key in (("w_p", "w_p"), ("overlap", "overlap"), ("stride", "stride"), ("mode", "mode")):
        if getattr(args, flag, None) is not None:
            cfg[key] = getattr(args, flag)
    for flag, key in (("a0", "a0_seconds"), ("keyframe_spacing", "keyframe_spacing_K"),
                      ("keyframe_count", "keyframe_count_l"), ("t1", "T1"), ("t2", "T2"),
                      ("bins", "orientation_bins_N")):
        if getattr(args, flag, None) is not None:
            t[key] = getattr(args, flag)
    if getattr(args, "no_early_exit", False):
        cfg["early_exit"] = False
    return PipelineConfig.from_dict(cfg)


def _model_config(model: Optional[SegModel]) -> Optional[PipelineConfig]:
    if model is None or "pipeline" not in model.metadata:
        return None
    return PipelineConfig.from_dict(model.metadata["pipeline"])


def _snapshot(path: Path, args, config: Optional[PipelineConfig] = None, extra: Optional[dict] = None) -> None:
    """Record what produced an output so the command can be rerun."""
    snap = {"homg_version": __version__, "command": args.command, "argv": sys.argv[1:],
            "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                     if k not in ("func",)}}
    if config is not None:
        snap["pipeline"] = config.to_dict()
    if extra:
        snap.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(snap, indent=1, default=str))


def _snapshot_path(out: Path) -> Path:
    return out / "config.json" if out.suffix == "" else out.with_name(out.name + ".config.json")


def _workers(args) -> int:
    return max(1, args.workers or os.cpu_count() or 1)


# -- helpers ------------------------------------------------------------------------


def _load_views(manifest: DatasetManifest, ids: Optional[str]):
    from .training import ViewData
    wanted = manifest.view_ids if not ids else [s.strip() for s in ids.split(",") if s.strip()]
    return [ViewData.from_entry(manifest.view(v)) for v in wanted]


def _collect(views, config, workers):
    from .training import collect_view_motion
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda v: collect_view_motion(v, config), views))


def _settings(args):
    from .training import TrainSettings
    kw = {"seed": args.seed}
    for flag in ("rounds", "train_cap"):
        if getattr(args, flag, None) is not None:
            kw[flag] = getattr(args, flag)
    return TrainSettings(**kw)


def _check_frame_source(args) -> None:
    if args.manifest is not None and args.view is None:
        raise UsageError("--manifest needs --view")
    if args.manifest is not None and args.calib is not None:
        raise UsageError("--calib only applies to --frames")
    if args.frames is not None and args.calib is None:
        raise UsageError("--frames needs --calib")


def _frame_source(args):
    """(frames iterator, calibration) from --frames/--calib/--fps or --manifest/--view."""
    _check_frame_source(args)
    if args.manifest is not None:
        entry = DatasetManifest.load(args.manifest).view(args.view)
        return iter_frames(entry.frames_dir, entry.fps), entry.load_calibration()
    return iter_frames(args.frames, args.fps), CalibrationModel.load(args.calib)


def _add_frame_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--frames", type=Path, help="directory of frames, read in lexicographic order")
    src.add_argument("--manifest", type=Path, help="dataset manifest (use with --view)")
    p.add_argument("--view", help="view id inside --manifest")
    p.add_argument("--calib", type=Path, help="calibration file (with --frames)")
    p.add_argument("--fps", type=float, default=25.0, help="frame rate for --frames (default 25)")


def _write_csv(path: Path, header: List[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def _fmt(x) -> str:
    return repr(float(x))


# -- commands -----------------------------------------------------------------------


def cmd_synth(args) -> int:
    from .synth import multi_view_specs, render, write_dataset
    if args.static and args.max_count is not None:
        raise UsageError("--static and --max-count contradict each other")
    if (args.width is None) != (args.height is None):
        raise UsageError("give both --width and --height or neither")
    kw = dict(fps=args.fps, n_frames=args.n_frames, annotate_every=args.annotate_every,
              annotate_from=args.annotate_from)
    if args.width is not None:
        kw.update(width=args.width, height=args.height)
    if args.max_count is not None:
        kw["max_count"] = args.max_count
    if args.static:
        kw["schedule"] = [0] * args.n_frames
    if args.no_distractor:
        kw["distractor"] = None
    specs = multi_view_specs(args.views, seed=args.seed, **kw)
    write_dataset(args.out, [render(s) for s in specs])
    _snapshot(args.out / "config.json", args)
    print(f"wrote {args.views} views to {args.out}")
    return 0


def cmd_train_seg(args) -> int:
    from .training import collect_view_motion, train_segmentation  # noqa: F401
    config = _config_from_args(args)
    views = _load_views(DatasetManifest.load(args.manifest), args.views)
    vms = _collect(views, config, _workers(args))
    model = train_segmentation(vms, config, _settings(args))
    if args.threshold is not None:
        model.threshold = args.threshold
    model.metadata["pipeline"] = config.to_dict()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    model.save(args.out)
    _snapshot(_snapshot_path(args.out), args, config)
    print(f"trees={len(model.trees)} threshold={model.threshold:.6g} train_f1={model.metadata['train_f1']:.4f}")
    return 0


def cmd_train_count(args) -> int:
    from .training import train_counting
    seg = SegModel.load(args.seg_model)
    config = _config_from_args(args, _model_config(seg))
    views = _load_views(DatasetManifest.load(args.manifest), args.views)
    vms = _collect(views, config, _workers(args))
    settings = _settings(args)
    settings.epsilon, settings.C_reg = args.epsilon, args.c_reg
    if args.threshold is not None:
        seg.threshold = args.threshold
    model = train_counting(seg, vms, config, settings)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    model.save(args.out)
    _snapshot(_snapshot_path(args.out), args, config)
    print(f"slope={model.slope:.6g}")
    return 0


def _stream(args, need_count: bool):
    _check_frame_source(args)
    seg = SegModel.load(args.seg_model)
    cnt = CountModel.load(args.count_model) if need_count else None
    config = _config_from_args(args, _model_config(seg))
    frames, calib = _frame_source(args)
    pipe = CameraPipeline(calib, config, seg, cnt, threshold=args.threshold)
    return pipe, frames, config


def cmd_segment(args) -> int:
    pipe, frames, config = _stream(args, need_count=False)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for fr in frames:
        motions = pipe.compute_motion(fr.pixels, fr.timestamp)
        if motions is None:
            continue
        s = pipe.segment(motions)
        write_mask(out / f"mask_{fr.index:06d}.pbm", s.mask)
        if args.scores:
            np.save(out / f"score_{fr.index:06d}.npy", s.C)
        if args.dump_motion:
            _dump_motion(out, fr.index, pipe, motions)
        n += 1
    _snapshot(out / "config.json", args, config)
    print(f"segmented {n} frames")
    return 0


def _dump_motion(out: Path, index: int, pipe: CameraPipeline, motions) -> None:
    d = out / "motion"
    d.mkdir(exist_ok=True)
    T2 = pipe.config.temporal.T2
    for k, m in enumerate(motions):
        write_float_pgm(d / f"E_{index:06d}_{k:02d}.pgm", m.E, vmax=T2)


def cmd_run(args) -> int:
    pipe, frames, config = _stream(args, need_count=True)
    rows = []
    mask_dir = args.masks
    if mask_dir is not None:
        mask_dir.mkdir(parents=True, exist_ok=True)
    for fr in frames:
        res = pipe.process_frame(fr.pixels, fr.timestamp, fr.index)
        if res is None:
            rows.append([fr.index, "", "", 0])
            continue
        rows.append([fr.index, _fmt(res.R), _fmt(res.y_hat), 1])
        if mask_dir is not None:
            write_mask(mask_dir / f"mask_{fr.index:06d}.pbm", res.mask)
        if args.dump_motion:
            _dump_motion(args.out.parent, fr.index, pipe, pipe.last_motions)
    _write_csv(args.out, ["frame_id", "R", "y_hat", "ready"], rows)
    _snapshot(_snapshot_path(args.out), args, config)
    print(f"processed {len(rows)} frames, {sum(r[3] for r in rows)} ready")
    return 0


def _read_table(path: Path) -> List[dict]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def cmd_count(args) -> int:
    """Apply a count model to a CSV of frame_id,R values."""
    model = CountModel.load(args.count_model)
    rows = []
    for r in _read_table(args.features):
        if r.get("R", "") == "":
            rows.append([r["frame_id"], "", "", 0])
            continue
        R = float(r["R"])
        rows.append([r["frame_id"], _fmt(R), _fmt(model.predict(R)), 1])
    _write_csv(args.out, ["frame_id", "R", "y_hat", "ready"], rows)
    _snapshot(_snapshot_path(args.out), args)
    return 0


def _truth_counts(path: Path) -> dict:
    """Frame counts from a counts CSV (frame_id,count) or a head annotation CSV."""
    rows = _read_table(path)
    if rows and "x" in rows[0]:
        return {a.frame_id: a.count for a in load_annotations(path)}
    key = next((k for k in ("count", "y", "y_hat") if rows and k in rows[0]), None)
    if key is None:
        raise DataError(f"{path}: expected a count, y or y_hat column")
    return {int(r["frame_id"]): float(r[key]) for r in rows if r[key] != ""}


def _pred_counts(path: Path) -> dict:
    rows = _read_table(path)
    key = next((k for k in ("y_hat", "count", "y") if rows and k in rows[0]), None)
    if key is None:
        raise DataError(f"{path}: expected a y_hat, count or y column")
    out = {}
    for r in rows:
        if r.get("ready", "1") in ("0", "") or r[key] == "":
            continue
        out[int(r["frame_id"])] = float(r[key])
    return out


def cmd_eval_count(args) -> int:
    truth, pred = _truth_counts(args.truth), _pred_counts(args.pred)
    ids = sorted(set(truth) & set(pred))
    if not ids:
        raise DataError("no frames in common between truth and prediction")
    m = count_metrics([truth[i] for i in ids], [pred[i] for i in ids])
    print(f"n={m.n} mae={m.mae:.6g} mse={m.mse:.6g} mde={m.mde:.6g}")
    if args.out is not None:
        _write_csv(args.out, ["view", "mae", "mse", "mde", "ap"],
                   [[args.view_name, _fmt(m.mae), _fmt(m.mse), _fmt(m.mde), ""]])
        _snapshot(_snapshot_path(args.out), args)
    return 0


def cmd_eval_seg(args) -> int:
    seg = SegModel.load(args.seg_model)
    config = _config_from_args(args, _model_config(seg))
    views = _load_views(DatasetManifest.load(args.manifest), args.views)
    from .seg import segment_frame
    vms = _collect(views, config, _workers(args))
    Cs, Gs, rois = [], [], []
    per_view = []
    for vm in vms:
        vC, vG = [], []
        for fid in vm.frame_ids:
            s = segment_frame(seg, vm.geometries, vm.motions[fid], vm.view.frame_shape, stride=config.stride,
                              threshold=np.inf, lo=vm.lo, early_exit=config.early_exit)
            vC.append(s.C)
            vG.append(gt_mask(vm.view.annotations[fid], vm.view.calib, vm.view.frame_shape))
        vroi = [vm.view.roi] * len(vC)
        try:
            per_view.append((vm.view.view_id, pr_ap(vC, vG, vroi).ap))
        except ValueError:
            per_view.append((vm.view.view_id, float("nan")))
        Cs += vC
        Gs += vG
        rois += vroi
    curve = pr_ap(Cs, Gs, rois)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_csv(args.out / "pr.csv", ["threshold", "precision", "recall"],
               ([_fmt(t), _fmt(p), _fmt(r)] for t, p, r in zip(curve.thresholds, curve.precision, curve.recall)))
    _write_csv(args.out / "metrics.csv", ["view", "mae", "mse", "mde", "ap"],
               [[v, "", "", "", _fmt(ap)] for v, ap in per_view] + [["all", "", "", "", _fmt(curve.ap)]])
    _snapshot(args.out / "config.json", args, config)
    thr, f1 = curve.best_f1()
    print(f"ap={curve.ap:.4f} best_f1={f1:.4f} at threshold={thr:.6g}")
    return 0


def cmd_bench(args) -> int:
    from .synth import SceneSpec, render
    from .synth import view_calibrations
    config = _config_from_args(args)
    if args.seg_model is not None:
        seg = SegModel.load(args.seg_model)
        config = _config_from_args(args, _model_config(seg))
    else:
        seg = _bench_model(args, config)
    cal = view_calibrations(1, args.height, seed=args.seed)[0]
    fps = 5.0
    warm = int(np.ceil(config.temporal.a0_seconds * fps - 1e-9))
    spec = SceneSpec(width=args.width, height=args.height, calibration=cal, fps=fps,
                     n_frames=warm + args.n_frames, max_count=args.max_count, seed=args.seed,
                     distractor=(int(0.05 * args.width), int(0.18 * args.width)))
    scene = render(spec)
    cnt = CountModel.load(args.count_model) if args.count_model else CountModel(1e-3)
    pipe = CameraPipeline(scene.calibration, config, seg, cnt, frame_shape=scene.frames[0].shape)
    # timings are single-threaded
    prev = cv2.getNumThreads()
    cv2.setNumThreads(1)
    times = []
    try:
        for i, f in enumerate(scene.frames):
            t0 = time.perf_counter()
            res = pipe.process_frame(f, i / fps, i)
            dt = time.perf_counter() - t0
            if res is not None:
                times.append(dt * 1000.0)
    finally:
        cv2.setNumThreads(prev)
    ms = np.asarray(times)
    stats = {"frames": int(ms.size), "width": args.width, "height": args.height,
             "mean_ms": float(ms.mean()), "median_ms": float(np.median(ms)),
             "p95_ms": float(np.percentile(ms, 95)), "fps": float(1000.0 / ms.mean())}
    print(f"frames={stats['frames']} mean={stats['mean_ms']:.2f}ms median={stats['median_ms']:.2f}ms "
          f"p95={stats['p95_ms']:.2f}ms fps={stats['fps']:.1f}")
    if args.out is not None:
        _write_csv(args.out, list(stats), [list(stats.values())])
        _snapshot(_snapshot_path(args.out), args, config)
    return 0


def _bench_model(args, config: PipelineConfig) -> SegModel:
    """A full-size model trained on a small synthetic set, for timing only."""
    from .synth import multi_view_specs, render
    from .training import TrainSettings, ViewData, collect_view_motion, train_segmentation
    specs = multi_view_specs(2, seed=args.seed, n_frames=60, annotate_every=2, annotate_from=2)
    views = [ViewData.from_render(render(s), f"bench{k}") for k, s in enumerate(specs)]
    vms = [collect_view_motion(v, config) for v in views]
    return train_segmentation(vms, config, TrainSettings(seed=args.seed, train_cap=15))


def cmd_ablate(args) -> int:
    from .training import collect_view_motion, leave_one_view_out  # noqa: F401
    base = _config_from_args(args)
    views = _load_views(DatasetManifest.load(args.manifest), args.views)
    settings = _settings(args)
    per_fold, summary = [], []
    for mode in MODES:
        cfg = base.with_mode(mode)
        vms = _collect(views, cfg, _workers(args))
        rep = leave_one_view_out(vms, cfg, settings)
        for f in rep.folds:
            m = f.evaluation.metrics
            per_fold.append([mode, f.held_out, _fmt(f.count_model.slope), _fmt(m.mae), _fmt(m.mse),
                             _fmt(m.mde), _fmt(f.evaluation.ap)])
        slopes = np.asarray(rep.slopes)
        summary.append([mode, _fmt(slopes.mean()), _fmt(slopes.std(ddof=1)), _fmt(rep.slope_cov),
                        _fmt(rep.pearson)])
        print(f"{mode}: slope_cov={rep.slope_cov:.4f} pearson={rep.pearson:.4f}")
    args.out.mkdir(parents=True, exist_ok=True)
    _write_csv(args.out / "ablation_folds.csv", ["mode", "view", "slope", "mae", "mse", "mde", "ap"], per_fold)
    _write_csv(args.out / "ablation.csv", ["mode", "slope_mean", "slope_std", "slope_cov", "pearson"], summary)
    _snapshot(args.out / "config.json", args, base, {"settings": settings.to_dict()})
    return 0


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"homg {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    common.add_argument("--workers", type=int, default=None,
                        help="parallel workers (default: available CPUs); results do not depend on it")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_, pipeline=True):
        p = sub.add_parser(name, help=help_, description=help_, parents=[common])
        if pipeline:
            _add_pipeline_flags(p)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "render a synthetic multi-view dataset", pipeline=False)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--views", type=int, default=6)
    p.add_argument("--n-frames", type=int, default=200)
    p.add_argument("--width", type=int, help="frame width for every view (default: cycle 320x240, 400x300, 480x360)")
    p.add_argument("--height", type=int)
    p.add_argument("--fps", type=float, default=5.0)
    p.add_argument("--max-count", type=int)
    p.add_argument("--static", action="store_true", help="no people at all")
    p.add_argument("--no-distractor", action="store_true")
    p.add_argument("--annotate-every", type=int, default=1)
    p.add_argument("--annotate-from", type=float, default=0.0, help="seconds")

    for name, func, help_ in (("train-seg", cmd_train_seg, "train the crowd/non-crowd window classifier"),
                              ("train-count", cmd_train_count, "fit the count regressor")):
        p = add(name, func, help_)
        p.add_argument("--manifest", type=Path, required=True)
        p.add_argument("--views", help="comma-separated view ids (default: all)")
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--train-cap", type=int, help="annotated frames per view (default 50)")
        p.add_argument("--threshold", type=float, help="override the mask threshold")
        if name == "train-seg":
            p.add_argument("--rounds", type=int, help="boosting rounds (default 100)")
        else:
            p.add_argument("--seg-model", type=Path, required=True)
            p.add_argument("--epsilon", type=float, default=0.5)
            p.add_argument("--c-reg", type=float, default=1.0)

    p = add("segment", cmd_segment, "write crowd masks for a frame sequence")
    _add_frame_source(p)
    p.add_argument("--seg-model", type=Path, required=True)
    p.add_argument("--threshold", type=float, help="override the model's mask threshold")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--scores", action="store_true", help="also save score images (.npy)")
    p.add_argument("--dump-motion", action="store_true", help="write per-strip E rasters as PGM")

    p = add("run", cmd_run, "full pipeline: per-frame R and count estimate")
    _add_frame_source(p)
    p.add_argument("--seg-model", type=Path, required=True)
    p.add_argument("--count-model", type=Path, required=True)
    p.add_argument("--threshold", type=float, help="override the model's mask threshold")
    p.add_argument("--out", type=Path, required=True, help="counts CSV")
    p.add_argument("--masks", type=Path, help="directory for per-frame masks")
    p.add_argument("--dump-motion", action="store_true")

    p = add("count", cmd_count, "apply a count model to a CSV with frame_id,R", pipeline=False)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--count-model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("eval-seg", cmd_eval_seg, "pixelwise precision/recall and AP on annotated views")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--views", help="comma-separated view ids (default: all)")
    p.add_argument("--seg-model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory for pr.csv and metrics.csv")

    p = add("eval-count", cmd_eval_count, "MAE/MSE/MDE of predicted against true counts", pipeline=False)
    p.add_argument("--truth", type=Path, required=True, help="counts CSV or head annotation CSV")
    p.add_argument("--pred", type=Path, required=True, help="counts CSV with y_hat (and ready)")
    p.add_argument("--out", type=Path, help="metrics CSV")
    p.add_argument("--view-name", default="all")

    p = add("bench", cmd_bench, "per-frame latency on synthetic frames")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--n-frames", type=int, default=300)
    p.add_argument("--max-count", type=int, default=20)
    p.add_argument("--seg-model", type=Path)
    p.add_argument("--count-model", type=Path)
    p.add_argument("--out", type=Path, help="CSV of timing statistics")

    p = add("ablate", cmd_ablate, "leave-one-view-out slope consistency in both normalization orders")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--views", help="comma-separated view ids (default: all)")
    p.add_argument("--rounds", type=int)
    p.add_argument("--train-cap", type=int)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, CalibrationError, LayoutMismatch, ValueError, OSError) as exc:
        print(f"homg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
