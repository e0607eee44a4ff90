"""Moving gradients: Sobel differencing against a sparse temporal reference set."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import List, Optional

import cv2
import numpy as np


class NotReady(Exception):
    """Raised when a stream has not accumulated enough history yet."""


@dataclass(frozen=True)
class TemporalConfig:
    a0_seconds: float = 1.0
    keyframe_spacing_K: float = 30.0
    keyframe_count_l: int = 4
    T1: float = 20.0
    T2: float = 120.0
    orientation_bins_N: int = 8

    def __post_init__(self):
        if not 0 < self.a0_seconds < self.keyframe_spacing_K:
            raise ValueError("require 0 < a0_seconds < keyframe_spacing_K")
        if self.keyframe_count_l < 1:
            raise ValueError("keyframe_count_l must be >= 1")
        if not 0 <= self.T1 < self.T2:
            raise ValueError("require 0 <= T1 < T2")
        if self.orientation_bins_N < 2:
            raise ValueError("orientation_bins_N must be >= 2")


@dataclass(frozen=True)
class GradientField:
    ex: np.ndarray
    ey: np.ndarray

    @property
    def shape(self):
        return self.ex.shape

    @property
    def norm(self) -> np.ndarray:
        # cached on first use; the field itself is treated as immutable
        cached = self.__dict__.get("_norm")
        if cached is None:
            cached = np.sqrt(self.ex * self.ex + self.ey * self.ey)
            object.__setattr__(self, "_norm", cached)
        return cached


@dataclass
class MotionField:
    E: np.ndarray
    O: np.ndarray

    @property
    def shape(self):
        return self.E.shape


def sobel(pixels: np.ndarray) -> GradientField:
    """3x3 Sobel with replicated borders; rasters under 3x3 give zero gradients."""
    if pixels.ndim != 2 or min(pixels.shape) < 3:
        z = np.zeros(pixels.shape[:2], dtype=np.float64)
        return GradientField(z, z.copy())
    ex = cv2.Sobel(pixels, cv2.CV_64F, 1, 0, ksize=3, borderType=cv2.BORDER_REPLICATE)
    ey = cv2.Sobel(pixels, cv2.CV_64F, 0, 1, ksize=3, borderType=cv2.BORDER_REPLICATE)
    return GradientField(ex, ey)


def gradient_diff(current: GradientField, past: GradientField) -> np.ndarray:
    """Per-pixel ``|E0 - Ea|`` where the current gradient is strictly stronger, else 0."""
    if current.shape != past.shape:
        raise ValueError(f"gradient field shapes differ: {current.shape} vs {past.shape}")
    dx = current.ex - past.ex
    dy = current.ey - past.ey
    d = np.sqrt(dx * dx + dy * dy)
    d[current.norm <= past.norm] = 0.0
    return d


def orientation_bins(field: GradientField, n_bins: int) -> np.ndarray:
    theta = np.arctan2(field.ey, field.ex)
    o = np.floor(n_bins * (theta + np.pi) / (2 * np.pi)).astype(np.int64)
    np.minimum(o, n_bins - 1, out=o)
    return o.astype(np.uint8 if n_bins <= 256 else np.int64)


def lower_median(stack: np.ndarray) -> np.ndarray:
    """Element of rank floor((n-1)/2) along axis 0."""
    n = stack.shape[0]
    if n == 1:
        return stack[0]
    k = (n - 1) // 2
    return np.partition(stack, k, axis=0)[k]


def truncate(e_bar: np.ndarray, cfg: TemporalConfig) -> np.ndarray:
    return np.minimum(np.maximum(0.0, e_bar - cfg.T1), cfg.T2)


class KeyframeBuffer:
    """Temporal reference set for one (camera, strip) stream.

    Holds the ``recent`` field (refreshed once it is ``a0`` seconds old) and
    up to ``l`` keyframes. A frame becomes a keyframe when it is at least ``K``
    seconds newer than the newest keyframe (or the stream start), so at most
    ``l + 1`` gradient fields are retained.
    """

    _EPS = 1e-9

    def __init__(self, cfg: TemporalConfig):
        self.cfg = cfg
        self.start: Optional[float] = None
        self.clock: Optional[float] = None
        self.recent: Optional[GradientField] = None
        self.recent_time: Optional[float] = None
        self.keyframes: deque = deque()

    def is_ready(self, timestamp: float) -> bool:
        return self.start is not None and timestamp - self.start >= self.cfg.a0_seconds - self._EPS

    def references(self) -> List[GradientField]:
        if self.recent is None:
            return []
        return [self.recent] + [g for _, g in reversed(self.keyframes)]

    def reference_times(self) -> List[float]:
        if self.recent is None:
            return []
        return [self.recent_time] + [t for t, _ in reversed(self.keyframes)]

    @property
    def newest_keyframe_time(self) -> Optional[float]:
        if self.keyframes:
            return self.keyframes[-1][0]
        return self.start

    def stored_fields(self) -> int:
        ids = {id(g) for g in self.references()}
        return len(ids)

    def advance(self, grads: GradientField, timestamp: float) -> "KeyframeBuffer":
        if self.clock is not None and timestamp <= self.clock:
            raise ValueError(f"timestamps must increase strictly ({timestamp} after {self.clock})")
        self.clock = timestamp
        if self.start is None:
            self.start = timestamp
            self.recent, self.recent_time = grads, timestamp
            return self
        cfg = self.cfg
        if timestamp - self.newest_keyframe_time >= cfg.keyframe_spacing_K - self._EPS:
            self.keyframes.append((timestamp, grads))
            while len(self.keyframes) > cfg.keyframe_count_l:
                self.keyframes.popleft()
        if timestamp - self.recent_time >= cfg.a0_seconds - self._EPS:
            self.recent, self.recent_time = grads, timestamp
        return self


def moving_gradient_from_refs(current: GradientField, refs: List[GradientField],
                              cfg: TemporalConfig) -> MotionField:
    if not refs:
        raise NotReady("no reference gradients yet")
    if len(refs) == 1:
        e_bar = gradient_diff(current, refs[0])
    else:
        e_bar = lower_median(np.stack([gradient_diff(current, r) for r in refs]))
    return MotionField(truncate(e_bar, cfg), orientation_bins(current, cfg.orientation_bins_N))


def moving_gradient(current: GradientField, buffer: KeyframeBuffer, cfg: TemporalConfig,
                    timestamp: Optional[float] = None) -> MotionField:
    """Truncated median of gated gradient differences against every stored reference.

    Raises :class:`NotReady` during warm-up.
    """
    if timestamp is not None and not buffer.is_ready(timestamp):
        raise NotReady("less than a0 seconds of history")
    return moving_gradient_from_refs(current, buffer.references(), cfg)


def rescale_motion(E: np.ndarray, O: np.ndarray, geom) -> MotionField:
    """Move a full-resolution motion field into one strip's normalized grid.

    E is resampled bilinearly, O with nearest neighbour (bins are categorical).
    """
    from .calib import extract_strip

    e = extract_strip(E, geom, cv2.INTER_LINEAR)
    o = extract_strip(O, geom, cv2.INTER_NEAREST)
    return MotionField(np.maximum(e, 0.0), o)
