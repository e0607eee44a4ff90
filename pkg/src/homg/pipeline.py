"""Per-camera streaming pipeline: strips -> moving gradients -> segmentation -> count."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .calib import CalibrationModel, StripGeometry, extract_strip, plan_strips
from .count import CountModel
from .features import count_feature
from .motion import (
    KeyframeBuffer,
    MotionField,
    TemporalConfig,
    moving_gradient_from_refs,
    rescale_motion,
    sobel,
)
from .seg import ScoreImage, SegModel, segment_frame

log = logging.getLogger(__name__)

NORMALIZED_FIRST = "normalized-first"
GRADIENTS_FIRST = "gradients-first"
MODES = (NORMALIZED_FIRST, GRADIENTS_FIRST)


@dataclass(frozen=True)
class PipelineConfig:
    w_p: int = 8
    overlap: float = 0.5
    stride: int = 2
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    mode: str = NORMALIZED_FIRST
    early_exit: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def with_mode(self, mode: str) -> "PipelineConfig":
        return replace(self, mode=mode)

    def to_dict(self) -> dict:
        t = self.temporal
        return {"w_p": self.w_p, "overlap": self.overlap, "stride": self.stride, "mode": self.mode,
                "early_exit": self.early_exit,
                "temporal": {"a0_seconds": t.a0_seconds, "keyframe_spacing_K": t.keyframe_spacing_K,
                             "keyframe_count_l": t.keyframe_count_l, "T1": t.T1, "T2": t.T2,
                             "orientation_bins_N": t.orientation_bins_N}}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d["temporal"] = TemporalConfig(**d.get("temporal", {}))
        return cls(**d)


@dataclass
class FrameResult:
    frame_id: Optional[int]
    timestamp: float
    C: np.ndarray
    mask: np.ndarray
    R: float
    y_hat: float

    @property
    def y_rounded(self) -> int:
        return int(np.rint(self.y_hat))


class CameraPipeline:
    """Stateful processing for one camera stream (single writer)."""

    def __init__(self, calib: CalibrationModel, config: Optional[PipelineConfig] = None,
                 seg_model: Optional[SegModel] = None, count_model: Optional[CountModel] = None,
                 threshold: Optional[float] = None, frame_shape: Optional[Tuple[int, int]] = None):
        self.calib = calib
        self.config = config or PipelineConfig()
        self.seg_model = seg_model
        self.count_model = count_model
        self.threshold = threshold
        self.frame_shape: Optional[Tuple[int, int]] = None
        self.geometries: List[StripGeometry] = []
        self.buffers: List[KeyframeBuffer] = []
        self.lo = max(calib.first_analyzable_row(), 0)
        if seg_model is not None:
            seg_model.check_layout(layout={"version": seg_model.layout["version"], "w_p": self.config.w_p,
                                           "n_bins": self.config.temporal.orientation_bins_N,
                                           "cells": seg_model.layout["cells"]})
        if frame_shape is not None:
            self._init_layout(tuple(frame_shape))

    def _init_layout(self, shape: Tuple[int, int]) -> None:
        cfg = self.config
        self.frame_shape = shape
        self.geometries = plan_strips(self.calib, shape, cfg.w_p, cfg.overlap)
        n_buffers = len(self.geometries) if cfg.mode == NORMALIZED_FIRST else 1
        self.buffers = [KeyframeBuffer(cfg.temporal) for _ in range(n_buffers)]

    def _check_frame(self, frame: np.ndarray) -> None:
        if frame.ndim != 2:
            raise ValueError("frames must be single-channel grayscale")
        if self.frame_shape is None:
            self._init_layout(frame.shape)
        elif frame.shape != self.frame_shape:
            raise ValueError(f"frame size {frame.shape} differs from the stream's {self.frame_shape}")

    def compute_motion(self, frame: np.ndarray, timestamp: float) -> Optional[List[MotionField]]:
        """Advance the temporal state; per-strip motion fields, or None during warm-up."""
        self._check_frame(frame)
        tcfg = self.config.temporal
        if self.config.mode == NORMALIZED_FIRST:
            motions = []
            ready = bool(self.buffers) and self.buffers[0].is_ready(timestamp)
            for geom, buf in zip(self.geometries, self.buffers):
                grads = sobel(extract_strip(frame, geom))
                if ready:
                    motions.append(moving_gradient_from_refs(grads, buf.references(), tcfg))
                buf.advance(grads, timestamp)
            return motions if ready else None
        buf = self.buffers[0]
        grads = sobel(frame)
        ready = buf.is_ready(timestamp)
        motions = None
        if ready:
            full = moving_gradient_from_refs(grads, buf.references(), tcfg)
            motions = [rescale_motion(full.E, full.O, g) for g in self.geometries]
        buf.advance(grads, timestamp)
        return motions

    def segment(self, motions: List[MotionField], threshold: Optional[float] = None) -> ScoreImage:
        if self.seg_model is None:
            raise ValueError("no segmentation model loaded")
        thr = threshold if threshold is not None else self.threshold
        return segment_frame(self.seg_model, self.geometries, motions, self.frame_shape,
                             stride=self.config.stride, threshold=thr, lo=self.lo,
                             early_exit=self.config.early_exit)

    def process_frame(self, frame: np.ndarray, timestamp: float,
                      frame_id: Optional[int] = None) -> Optional[FrameResult]:
        """Full per-frame analysis; None while the temporal buffer warms up."""
        motions = self.compute_motion(frame, timestamp)
        if motions is None:
            return None
        seg = self.segment(motions)
        R = count_feature(self.geometries, motions, seg.mask)
        y_hat = float(self.count_model.predict(R)) if self.count_model is not None else float("nan")
        self.last_motions = motions
        return FrameResult(frame_id, timestamp, seg.C, seg.mask, R, y_hat)

