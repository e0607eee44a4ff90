"""Synthetic annotated crowd sequences with exact ground truth.

People are drawn as blocky textured figures (head, torso, two legs) whose
size follows the view's calibration at their feet row. They walk slowly and
jitter every frame by an amount proportional to their size (at least one
pixel), so they are never perfectly still. An optional
escalator-like band of moving stripes supplies motion with no people in it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np

from .calib import CalibrationModel
from .data import DatasetManifest, HeadAnnotation, ViewEntry, save_annotations, save_frames, write_mask


class SceneError(ValueError):
    pass


@dataclass
class SceneSpec:
    width: int = 320
    height: int = 240
    calibration: CalibrationModel = field(default_factory=lambda: CalibrationModel(-60.0, 239.0, 24.0, 62.0))
    fps: float = 5.0
    n_frames: int = 200
    schedule: Optional[List[int]] = None  # people per frame; generated when None
    max_count: int = 20
    hold_seconds: Tuple[float, float] = (1.5, 3.0)
    jitter_px: int = 1  # amplitude floor
    jitter_fraction: float = 0.1  # amplitude as a fraction of person width
    walk_speed: float = 0.6  # person widths per second
    min_person_width: float = 7.0
    background_contrast: float = 10.0
    static_objects: int = 8
    placement_tries: int = 8
    keep_apart: bool = True  # walkers turn back instead of walking into others
    feet_margin: float = 0.5  # feet stay this many person heights above the bottom row
    distractor: Optional[Tuple[int, int]] = None  # column band [x0, x1)
    stripe_period: float = 11.0
    stripe_speed: float = 1.7  # px per frame
    stripe_amplitude: float = 45.0
    noise_sigma: float = 0.0
    annotate_every: int = 1
    annotate_from: float = 0.0  # seconds
    seed: int = 0

    def __post_init__(self):
        if self.jitter_px < 1:
            raise SceneError("jitter_px must be >= 1 so people are never perfectly still")
        if self.schedule is not None and len(self.schedule) != self.n_frames:
            raise SceneError("schedule length must equal n_frames")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["calibration"] = asdict(self.calibration)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["calibration"] = CalibrationModel(**d["calibration"])
        for key in ("hold_seconds", "distractor"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class _Person:
    x: float  # head x (box center)
    feet: float
    direction: float
    shades: Tuple[int, int, int]


@dataclass
class SceneRender:
    spec: SceneSpec
    frames: List[np.ndarray]
    annotations: List[HeadAnnotation]  # annotated frames only
    counts: List[int]  # true count for every frame
    heads: List[List[Tuple[float, float]]]  # every frame
    calibration: CalibrationModel
    distractor_mask: Optional[np.ndarray] = None

    @property
    def timestamps(self) -> List[float]:
        return [i / self.spec.fps for i in range(len(self.frames))]


def count_schedule(n_frames: int, fps: float, max_count: int, hold: Tuple[float, float],
                   rng: np.random.Generator) -> List[int]:
    out: List[int] = []
    while len(out) < n_frames:
        n = int(round(rng.uniform(*hold) * fps))
        out.extend([int(rng.integers(0, max_count + 1))] * max(1, n))
    return out[:n_frames]


def _background(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.height, spec.width
    noise = rng.normal(size=(h, w))
    smooth = cv2.GaussianBlur(noise, (0, 0), 4.0)
    smooth /= max(smooth.std(), 1e-9)
    bg = 110.0 + spec.background_contrast * smooth
    for _ in range(spec.static_objects):
        ow, oh = int(rng.integers(8, w // 5)), int(rng.integers(6, h // 6))
        x0, y0 = int(rng.integers(0, w - ow)), int(rng.integers(0, h - oh))
        bg[y0:y0 + oh, x0:x0 + ow] += rng.uniform(-25, 25)
    return bg


def _draw_person(img: np.ndarray, box: Tuple[int, int, int, int], shades: Tuple[int, int, int]) -> None:
    x0, y0, x1, y1 = box
    w, h = x1 - x0, y1 - y0
    H, W = img.shape

    def fill(ax0, ay0, ax1, ay1, v):
        ax0, ay0 = max(ax0, 0), max(ay0, 0)
        ax1, ay1 = min(ax1, W), min(ay1, H)
        if ax1 > ax0 and ay1 > ay0:
            img[ay0:ay1, ax0:ax1] = v

    head_h = max(1, int(round(h / 6.0)))
    torso_end = y0 + max(head_h + 1, int(round(0.55 * h)))
    hw = max(1, int(round(0.5 * w)))
    hx0 = x0 + (w - hw) // 2
    fill(hx0, y0, hx0 + hw, y0 + head_h, shades[0])
    fill(x0, y0 + head_h, x1, torso_end, shades[1])
    leg = max(1, int(round(0.4 * w)))
    fill(x0, torso_end, x0 + leg, y1, shades[2])
    fill(x1 - leg, torso_end, x1, y1, shades[2])


def _overlap(calib: CalibrationModel, x1: float, f1: float, x2: float, f2: float) -> float:
    """Intersection area of two people's boxes (head x, feet row)."""
    w1, h1 = calib.person_size(f1)
    w2, h2 = calib.person_size(f2)
    dx = min(x1 + w1 / 2, x2 + w2 / 2) - max(x1 - w1 / 2, x2 - w2 / 2)
    dy = min(f1, f2) - max(f1 - h1, f2 - h2)
    return max(dx, 0.0) * max(dy, 0.0)


def _shade(rng: np.random.Generator, dark: bool) -> int:
    # stay clear of the background mean so outlines have contrast
    return int(rng.integers(15, 65)) if dark else int(rng.integers(160, 235))


def _shades(rng: np.random.Generator) -> Tuple[int, int, int]:
    """Head, torso and legs alternate dark and light so inner edges always show."""
    dark = rng.random() < 0.5
    return _shade(rng, dark), _shade(rng, not dark), _shade(rng, dark)


def render(spec: SceneSpec) -> SceneRender:
    """Render the scene; identical specs give bitwise-identical output."""
    rng = np.random.default_rng(spec.seed)
    calib = spec.calibration
    H, W = spec.height, spec.width
    schedule = spec.schedule
    if schedule is None:
        schedule = count_schedule(spec.n_frames, spec.fps, spec.max_count, spec.hold_seconds, rng)
    if any(c > 0 for c in schedule) and calib.horizon_row >= H - 1:
        raise SceneError("horizon lies at or below the bottom row; people cannot be placed")

    # feet rows where a whole person fits and is wide enough
    lo = calib.first_analyzable_row()
    feet_rows = []
    for f in range(H - 1, -1, -1):
        if f <= calib.horizon_row:
            break
        w, h = calib.person_size(f)
        if w < max(spec.min_person_width, calib.min_width_ws):
            break
        if f - h >= max(lo, 0) and f <= H - 1 - spec.feet_margin * h:
            feet_rows.append(f)
    if not feet_rows and any(c > 0 for c in schedule):
        raise SceneError("no row can hold a fully visible person above the horizon")
    feet_rows = np.array(sorted(feet_rows), dtype=np.float64)

    band = spec.distractor
    bg = _background(spec, rng)

    distractor_mask = None
    stripe_rows = None
    if band is not None:
        bx0, bx1 = band
        distractor_mask = np.zeros((H, W), dtype=bool)
        distractor_mask[max(lo, 0):, bx0:bx1] = True
        cols = np.arange(bx0, bx1)
        ramp = np.minimum(cols - bx0 + 1, bx1 - cols) / 6.0
        taper = 0.5 - 0.5 * np.cos(np.pi * np.clip(ramp, 0, 1))
        stripe_rows = np.arange(max(lo, 0), H)

    def x_range(width):
        """Allowed head-x interval segments, keeping clear of the distractor band."""
        lo_x, hi_x = width / 2.0 + 1, W - width / 2.0 - 2
        if band is None:
            return [(lo_x, hi_x)]
        margin = 1.5 * width
        segs = [(lo_x, min(hi_x, band[0] - margin)), (max(lo_x, band[1] + margin), hi_x)]
        return [(a, b) for a, b in segs if b > a]

    people: List[_Person] = []
    frames, annotations, counts, all_heads = [], [], [], []
    ann_from = int(np.ceil(spec.annotate_from * spec.fps - 1e-9))
    for i in range(spec.n_frames):
        target = schedule[i]
        while len(people) > target:
            people.pop(int(rng.integers(len(people))))
        while len(people) < target:
            # people keep some personal space: best of a few random spots
            best = None
            for _ in range(max(1, spec.placement_tries)):
                feet = float(rng.choice(feet_rows))
                width = calib.width_at(feet)
                segs = x_range(width)
                if not segs:
                    raise SceneError("frame too narrow for people beside the distractor band")
                a, b = segs[int(rng.integers(len(segs)))]
                x = float(rng.uniform(a, b))
                cost = sum(_overlap(calib, x, feet, q.x, q.feet) for q in people)
                if best is None or cost < best[0]:
                    best = (cost, x, feet)
                if cost == 0:
                    break
            people.append(_Person(best[1], best[2], 1.0 if rng.random() < 0.5 else -1.0,
                                  _shades(rng)))

        img = bg.copy()
        if band is not None:
            phase = 2 * np.pi * (stripe_rows - spec.stripe_speed * i) / spec.stripe_period
            stripes = spec.stripe_amplitude * np.sin(phase)
            img[stripe_rows[0]:, band[0]:band[1]] += stripes[:, None] * taper[None, :]

        heads = []
        for p in sorted(people, key=lambda q: q.feet):
            width, height = calib.person_size(p.feet)
            # walk, bouncing off the allowed segment ends; someone about to
            # bump into another person turns around if that way is clearer,
            # so nobody is ever stuck in place
            step = p.direction * spec.walk_speed * width / spec.fps
            if spec.keep_apart:
                others = [q for q in people if q is not p]
                ahead = sum(_overlap(calib, p.x + step, p.feet, q.x, q.feet) for q in others)
                if ahead > 0:
                    behind = sum(_overlap(calib, p.x - step, p.feet, q.x, q.feet) for q in others)
                    if behind < ahead:
                        p.direction, step = -p.direction, -step
            p.x += step
            segs = x_range(width)
            seg = min(segs, key=lambda s: 0 if s[0] <= p.x <= s[1] else min(abs(p.x - s[0]), abs(p.x - s[1])))
            if p.x < seg[0]:
                p.x, p.direction = seg[0], 1.0
            elif p.x > seg[1]:
                p.x, p.direction = seg[1], -1.0
            amp = max(float(spec.jitter_px), spec.jitter_fraction * width)
            jx, jy = rng.uniform(-amp, amp, size=2)
            feet = float(np.round(p.feet + jy))
            hx = float(np.round(p.x + jx))
            hy = feet - calib.height_at(feet)
            box = calib.person_box(hx, hy)
            _draw_person(img, box, p.shades)
            heads.append((hx, hy))
        if spec.noise_sigma > 0:
            img += rng.normal(scale=spec.noise_sigma, size=img.shape)
        frames.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
        counts.append(len(heads))
        all_heads.append(heads)
        if i >= ann_from and (i - ann_from) % spec.annotate_every == 0:
            annotations.append(HeadAnnotation(i, list(heads)))
    return SceneRender(spec, frames, annotations, counts, all_heads, calib, distractor_mask)


# default camera resolutions, cycled across views
RESOLUTIONS = ((320, 240), (400, 300), (480, 360))


def _stratified(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    """One uniform draw per equal slice of [lo, hi), in random order."""
    u = (rng.permutation(n) + rng.uniform(size=n)) / n
    return lo + (hi - lo) * u


def view_calibrations(n_views: int, height, seed: int = 0) -> List[CalibrationModel]:
    """Distinct plausible calibrations; ``height`` is one frame height or one per view.

    Horizon and relative person size are stratified so any set of views spans
    weak to strong perspective and small to large people.
    """
    heights = [height] * n_views if np.isscalar(height) else list(height)
    if len(heights) != n_views:
        raise SceneError("need one height per view")
    rng = np.random.default_rng(seed)
    horizons = _stratified(rng, n_views, -0.8, -0.15)
    widths = _stratified(rng, n_views, 0.06, 0.10)
    out = []
    for k, h in enumerate(heights):
        aspect = float(rng.uniform(2.5, 2.7))
        wb = float(widths[k] * h)
        out.append(CalibrationModel(float(horizons[k] * h), float(h - 1), wb, wb * aspect, 4.0))
    return out


def multi_view_specs(n_views: int = 6, seed: int = 0, resolutions=None, **overrides) -> List[SceneSpec]:
    """Specs for ``n_views`` cameras; sizes cycle through ``resolutions`` unless width/height are given."""
    if "width" in overrides or "height" in overrides:
        sizes = [(overrides.pop("width", SceneSpec.width), overrides.pop("height", SceneSpec.height))] * n_views
    else:
        res = list(resolutions or RESOLUTIONS)
        sizes = [tuple(res[k % len(res)]) for k in range(n_views)]
    calibs = view_calibrations(n_views, [h for _, h in sizes], seed)
    specs = []
    for k, ((w, h), cal) in enumerate(zip(sizes, calibs)):
        kw = dict(overrides)
        kw.setdefault("distractor", (int(0.05 * w), int(0.18 * w)))
        specs.append(SceneSpec(width=w, height=h, calibration=cal, seed=seed * 1000 + k + 1, **kw))
    return specs


def write_dataset(out_dir, renders: Sequence[SceneRender], view_ids: Optional[Sequence[str]] = None) -> DatasetManifest:
    """Write frames, annotations, calibration and manifest in the standard layout."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, r in enumerate(renders):
        vid = view_ids[k] if view_ids else f"view{k + 1}"
        vdir = out / vid
        save_frames(vdir / "frames", r.frames)
        save_annotations(vdir / "heads.csv", r.annotations)
        r.calibration.save(vdir / "calib.txt")
        (vdir / "scene.json").write_text(json.dumps(r.spec.to_dict(), indent=1))
        if r.distractor_mask is not None:
            write_mask(vdir / "distractor.pbm", r.distractor_mask)
        with open(vdir / "counts.csv", "w") as fh:
            fh.write("frame_id,count\n")
            for i, c in enumerate(r.counts):
                fh.write(f"{i},{c}\n")
        entries.append(ViewEntry(vid, vdir / "frames", r.spec.fps, vdir / "heads.csv", vdir / "calib.txt"))
    manifest = DatasetManifest(entries)
    manifest.save(out / "manifest.ini")
    return manifest
