"""HoMG histograms, sliding-window segmentation features and the crowd-region feature."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .motion import MotionField

FEATURE_LAYOUT_VERSION = 1


def n_cells(w_p: int) -> int:
    return int(round(1.25 * w_p))


def feature_length(n_bins: int, cells: int) -> int:
    return n_bins * cells + cells + 1


@dataclass
class SegFeature:
    h: np.ndarray  # (cells, bins)
    s: np.ndarray  # (cells,)
    t: float

    def vector(self) -> np.ndarray:
        return np.concatenate([self.h.ravel(), self.s, [self.t]])

    @classmethod
    def from_vector(cls, v: np.ndarray, n_bins: int, cells: int) -> "SegFeature":
        nh = n_bins * cells
        return cls(v[:nh].reshape(cells, n_bins), v[nh:nh + cells], float(v[-1]))


def histogram(motion: MotionField, window: Tuple[int, int, int, int], n_bins: int) -> np.ndarray:
    """Sum of E per orientation bin over the half-open window (x0, y0, x1, y1)."""
    x0, y0, x1, y1 = window
    e = motion.E[y0:y1, x0:x1].ravel()
    o = motion.O[y0:y1, x0:x1].ravel().astype(np.intp)
    return np.bincount(o, weights=e, minlength=n_bins)[:n_bins].astype(np.float64)


def column_histograms(motion: MotionField, n_bins: int) -> np.ndarray:
    """Per-column orientation histograms of a strip, shape (width, bins)."""
    h, w = motion.E.shape
    idx = np.arange(w, dtype=np.intp)[None, :] * n_bins + motion.O.astype(np.intp)
    out = np.bincount(idx.ravel(), weights=motion.E.ravel(), minlength=w * n_bins)
    return out.reshape(w, n_bins)


def window_starts(width: int, cells: int, stride: int) -> np.ndarray:
    """Left edges of sliding windows; the last window is flush with the right edge."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if width <= cells:
        return np.zeros(1, dtype=np.int64)
    starts = list(range(0, width - cells + 1, stride))
    if starts[-1] != width - cells:
        starts.append(width - cells)
    return np.asarray(starts, dtype=np.int64)


def features_from_columns(col_hist: np.ndarray, starts: np.ndarray, cells: int, h_k: int) -> np.ndarray:
    """Stack of window feature vectors from per-column histograms.

    Windows reaching past the right edge are zero-padded.
    """
    width, n_bins = col_hist.shape
    need = int(starts.max()) + cells if len(starts) else cells
    if need > width:
        col_hist = np.vstack([col_hist, np.zeros((need - width, n_bins))])
    idx = starts[:, None] + np.arange(cells)[None, :]
    h = col_hist[idx]  # (n, cells, bins)
    s = h.sum(axis=2)
    t = s.sum(axis=1, keepdims=True)
    n = len(starts)
    return np.concatenate([h.reshape(n, -1), s, t], axis=1) / float(h_k)


def seg_feature(motion: MotionField, x0: int, h_k: int, n_bins: int = 8, w_p: int = 8) -> SegFeature:
    """Feature of the full-height window starting at column ``x0``.

    Columns outside the strip contribute zeros.
    """
    if h_k < 1:
        raise ValueError("h_k must be >= 1")
    cells = n_cells(w_p)
    col = column_histograms(motion, n_bins)
    width = col.shape[0]
    h = np.zeros((cells, n_bins))
    lo, hi = max(x0, 0), min(x0 + cells, width)
    if hi > lo:
        h[lo - x0:hi - x0] = col[lo:hi]
    s = h.sum(axis=1)
    t = s.sum()
    return SegFeature(h / h_k, s / h_k, t / h_k)


def strip_window_features(motion: MotionField, h_k: int, stride: int, n_bins: int = 8,
                          w_p: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """All sliding-window features in a strip: (starts, features)."""
    cells = n_cells(w_p)
    col = column_histograms(motion, n_bins)
    starts = window_starts(col.shape[0], cells, stride)
    return starts, features_from_columns(col, starts, cells, h_k)


def strip_mask_lookup(geom, mask: np.ndarray) -> np.ndarray:
    """Mask value at the source pixel each normalized pixel of a strip maps to."""
    rows = geom.source_rows()
    cols = geom.source_cols()
    valid = (rows >= 0) & (rows < mask.shape[0])
    out = np.zeros((geom.norm_height, geom.norm_width), dtype=bool)
    if valid.any():
        out[valid] = mask[rows[valid]][:, cols] != 0
    return out


def count_feature(geometries: Sequence, motions: Sequence[MotionField], mask: np.ndarray) -> float:
    """Height-normalized moving-gradient mass inside the crowd mask, summed over strips."""
    total = 0.0
    if not mask.any():
        return total
    for geom, m in zip(geometries, motions):
        g = getattr(geom, "geometry", geom)
        sel = strip_mask_lookup(g, mask)
        total += float(m.E[sel].sum()) / g.norm_height
    return total
