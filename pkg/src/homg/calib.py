"""Coarse camera calibration and strip-based scale normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import cv2
import numpy as np

DEFAULT_WP = 8
DEFAULT_OVERLAP = 0.5


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationModel:
    """Linear-in-row person size model for one camera view.

    Expected person width and height grow linearly with the distance below
    the horizon row and vanish at the horizon. Sizes are those of a person
    whose feet rest on row ``r``.
    """

    horizon_row: float
    ref_row: float
    width_at_ref: float
    height_at_ref: float
    min_width_ws: float = 4.0

    def __post_init__(self):
        if self.width_at_ref <= 0 or self.height_at_ref <= 0:
            raise CalibrationError("reference person size must be positive")
        if self.min_width_ws < 1:
            raise CalibrationError("min_width_ws must be >= 1")
        if self.ref_row <= self.horizon_row:
            raise CalibrationError("ref_row must lie below horizon_row")

    @property
    def width_slope(self) -> float:
        return self.width_at_ref / (self.ref_row - self.horizon_row)

    @property
    def height_slope(self) -> float:
        return self.height_at_ref / (self.ref_row - self.horizon_row)

    @property
    def aspect(self) -> float:
        return self.height_at_ref / self.width_at_ref

    def width_at(self, r: float) -> float:
        if r <= self.horizon_row:
            raise CalibrationError(f"no person scale defined at row {r} (horizon at {self.horizon_row})")
        return self.width_slope * (r - self.horizon_row)

    def height_at(self, r: float) -> float:
        if r <= self.horizon_row:
            raise CalibrationError(f"no person scale defined at row {r} (horizon at {self.horizon_row})")
        return self.height_slope * (r - self.horizon_row)

    def person_size(self, r: float) -> Tuple[float, float]:
        """Expected (width, height) in pixels of a person standing on row ``r``."""
        return self.width_at(r), self.height_at(r)

    def first_analyzable_row(self) -> int:
        """Smallest integer row whose expected person width reaches ``min_width_ws``."""
        r = math.ceil(self.horizon_row + self.min_width_ws / self.width_slope)
        # guard against round-off pushing the cutoff row just below ws
        while self.width_at(r) < self.min_width_ws:
            r += 1
        return r

    def feet_row_for_head(self, head_row: float) -> float:
        """Row of the feet for a person whose head top sits on ``head_row``."""
        k = self.height_slope
        if k >= 1.0:
            raise CalibrationError("person taller than its distance to the horizon; head row is ambiguous")
        feet = (head_row - k * self.horizon_row) / (1.0 - k)
        if feet <= self.horizon_row:
            raise CalibrationError(f"head row {head_row} lies above the horizon")
        return feet

    def person_box(self, head_x: float, head_y: float) -> Tuple[int, int, int, int]:
        """Integer box (x0, y0, x1, y1), half-open, with the head at top-center."""
        feet = self.feet_row_for_head(head_y)
        w, h = self.person_size(feet)
        x0 = int(round(head_x - w / 2.0))
        y0 = int(round(head_y))
        return x0, y0, x0 + max(1, int(round(w))), y0 + max(1, int(round(h)))

    # -- persistence -------------------------------------------------------

    _KEYS = ("horizon_row", "ref_row", "width_at_ref", "height_at_ref", "min_width_ws")

    def to_text(self) -> str:
        return "".join(f"{k}={getattr(self, k)!r}\n" for k in self._KEYS)

    @classmethod
    def from_text(cls, text: str) -> "CalibrationModel":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CalibrationError(f"line {lineno}: expected key=value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in cls._KEYS:
                raise CalibrationError(f"line {lineno}: unknown key {key!r}")
            values[key] = float(val)
        missing = [k for k in cls._KEYS[:4] if k not in values]
        if missing:
            raise CalibrationError(f"missing calibration keys: {', '.join(missing)}")
        return cls(**values)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "CalibrationModel":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class StripGeometry:
    """Placement of one strip in the source frame and its normalized size."""

    anchor_row: int
    source_top_row: int
    source_height: int
    scale_s: float
    norm_height: int
    norm_width: int
    frame_width: int

    @property
    def scale_x(self) -> float:
        return self.norm_width / self.frame_width

    @property
    def scale_y(self) -> float:
        return self.norm_height / self.source_height

    def source_rows(self) -> np.ndarray:
        """Source row hit by the center of each normalized row (may be off-frame)."""
        y = np.arange(self.norm_height)
        return self.source_top_row + np.floor((y + 0.5) * self.source_height / self.norm_height).astype(np.int64)

    def source_cols(self) -> np.ndarray:
        x = np.arange(self.norm_width)
        cols = np.floor((x + 0.5) * self.frame_width / self.norm_width).astype(np.int64)
        return np.minimum(cols, self.frame_width - 1)


@dataclass
class Strip:
    geometry: StripGeometry
    pixels: np.ndarray

    # convenience accessors mirroring the geometry
    @property
    def source_top_row(self) -> int:
        return self.geometry.source_top_row

    @property
    def source_height(self) -> int:
        return self.geometry.source_height

    @property
    def scale_s(self) -> float:
        return self.geometry.scale_s

    @property
    def normalized_height(self) -> int:
        return self.geometry.norm_height


@dataclass
class StripStack:
    strips: List[Strip]
    frame_id: Optional[int] = None
    w_p: int = DEFAULT_WP
    frame_shape: Tuple[int, int] = (0, 0)

    def __len__(self):
        return len(self.strips)

    def __iter__(self):
        return iter(self.strips)

    @property
    def geometries(self) -> List[StripGeometry]:
        return [s.geometry for s in self.strips]


def plan_strips(model: CalibrationModel, frame_shape: Tuple[int, int],
                w_p: int = DEFAULT_WP, overlap: float = DEFAULT_OVERLAP) -> List[StripGeometry]:
    """Lay out overlapping strips, anchored on their bottom row, bottom-up.

    Returns geometries ordered by ``source_top_row`` ascending. Rows whose
    expected person width is below ``min_width_ws`` are never used as anchors.
    """
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must be in [0, 1)")
    if w_p < 2:
        raise ValueError("w_p must be >= 2")
    height, width = frame_shape
    if height <= 0 or width <= 0:
        raise ValueError("frame must be nonempty")

    lo = max(model.first_analyzable_row(), 0)
    if lo >= height:
        return []

    out = []
    b = height - 1
    while True:
        w_r, h_r = model.person_size(b)
        src_h = max(1, int(round(h_r)))
        s = w_p / w_r
        top = b - src_h + 1
        out.append(StripGeometry(
            anchor_row=b,
            source_top_row=top,
            source_height=src_h,
            scale_s=s,
            norm_height=max(1, int(round(src_h * s))),
            norm_width=max(1, int(round(width * s))),
            frame_width=width,
        ))
        if top <= lo:
            break
        step = max(1, int(round((1.0 - overlap) * src_h)))
        b = max(b - step, lo)
    out.reverse()
    return out


def extract_strip(frame: np.ndarray, geom: StripGeometry, interpolation=cv2.INTER_LINEAR) -> np.ndarray:
    """Crop the strip's source rows (zero-padded above the frame) and rescale."""
    top = geom.source_top_row
    bottom = top + geom.source_height
    if top >= 0:
        src = frame[top:bottom]
    else:
        src = np.zeros((geom.source_height,) + frame.shape[1:], dtype=frame.dtype)
        src[-top:] = frame[0:bottom]
    size = (geom.norm_width, geom.norm_height)
    if src.shape[1] == size[0] and src.shape[0] == size[1]:
        return np.ascontiguousarray(src).copy()
    return cv2.resize(np.ascontiguousarray(src), size, interpolation=interpolation)


def decompose(model: CalibrationModel, frame: np.ndarray, w_p: int = DEFAULT_WP,
              overlap: float = DEFAULT_OVERLAP, frame_id: Optional[int] = None,
              geometries: Optional[List[StripGeometry]] = None) -> StripStack:
    """Split ``frame`` into scale-normalized strips.

    ``geometries`` may be passed to reuse a layout from :func:`plan_strips`.
    """
    if frame.size == 0:
        raise ValueError("frame must be nonempty")
    if geometries is None:
        geometries = plan_strips(model, frame.shape[:2], w_p, overlap)
    strips = [Strip(g, extract_strip(frame, g)) for g in geometries]
    return StripStack(strips, frame_id=frame_id, w_p=w_p, frame_shape=frame.shape[:2])


def map_window_to_frame(strip, window: Tuple[float, float, float, float]) -> Tuple[int, int, int, int]:
    """Map a normalized rectangle (x0, y0, x1, y1) of a strip to source pixels.

    Coordinates are half-open; the result may extend past the frame when the
    strip itself was padded.
    """
    geom = strip.geometry if isinstance(strip, Strip) else strip
    x0, y0, x1, y1 = window
    sx, sy = geom.scale_x, geom.scale_y
    return (
        int(round(x0 / sx)),
        geom.source_top_row + int(round(y0 / sy)),
        int(round(x1 / sx)),
        geom.source_top_row + int(round(y1 / sy)),
    )
