"""Counting errors, ground-truth crowd masks and pixelwise precision/recall."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np


@dataclass
class CountMetrics:
    mae: float
    mse: float
    mde: float
    n: int
    mde_excluded: int = 0


def count_metrics(truth: Sequence[float], pred: Sequence[float]) -> CountMetrics:
    """MAE, MSE and MDE; frames with a true count of zero are left out of MDE."""
    y = np.asarray(truth, dtype=np.float64)
    yh = np.asarray(pred, dtype=np.float64)
    if y.shape != yh.shape:
        raise ValueError("truth and prediction lengths differ")
    if y.size == 0:
        raise ValueError("no frames to evaluate")
    err = np.abs(y - yh)
    nz = y > 0
    mde = float(np.mean(err[nz] / y[nz])) if nz.any() else float("nan")
    return CountMetrics(float(err.mean()), float(np.mean(err * err)), mde, int(y.size),
                        int((~nz).sum()))


def gt_mask(heads: Sequence[Tuple[float, float]], calib, frame_shape: Tuple[int, int]) -> np.ndarray:
    """Union of expected-size person rectangles, each hanging below its head point."""
    mask = np.zeros(frame_shape, dtype=bool)
    H, W = frame_shape
    for hx, hy in heads:
        x0, y0, x1, y1 = calib.person_box(hx, hy)
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, W), min(y1, H)
        if x1 > x0 and y1 > y0:
            mask[y0:y1, x0:x1] = True
    return mask


@dataclass
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    ap: float

    def best_f1(self) -> Tuple[float, float]:
        """(threshold, F1) maximizing F1 over the sweep."""
        p, r = self.precision, self.recall
        with np.errstate(invalid="ignore", divide="ignore"):
            f1 = np.where(p + r > 0, 2 * p * r / (p + r), 0.0)
        i = int(np.argmax(f1))
        return float(self.thresholds[i]), float(f1[i])


def average_precision(precision: np.ndarray, recall: np.ndarray) -> float:
    """All-points area under the monotone (non-increasing) precision envelope."""
    r = np.concatenate([[0.0], recall])
    p = np.concatenate([[0.0], precision])
    env = np.maximum.accumulate(p[::-1])[::-1]
    return float(np.sum((r[1:] - r[:-1]) * env[1:]))


def pr_ap(score_images: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray],
          roi_masks: Optional[Sequence[Optional[np.ndarray]]] = None) -> PRCurve:
    """Pixelwise PR sweep over every distinct score, pooled across frames.

    A pixel is predicted crowd when its score is >= the threshold. Pixels
    outside an ROI mask are dropped from both prediction and ground truth.
    """
    scores, labels = [], []
    for i, (C, G) in enumerate(zip(score_images, gt_masks)):
        if C.shape != G.shape:
            raise ValueError(f"frame {i}: score image {C.shape} and mask {G.shape} differ")
        roi = None if roi_masks is None else roi_masks[i]
        if roi is not None:
            keep = np.asarray(roi) != 0
            scores.append(C[keep])
            labels.append(G[keep] != 0)
        else:
            scores.append(C.ravel())
            labels.append(G.ravel() != 0)
    s = np.concatenate(scores) if scores else np.zeros(0)
    g = np.concatenate(labels) if labels else np.zeros(0, dtype=bool)
    n_pos = int(g.sum())
    if n_pos == 0:
        raise ValueError("recall undefined: ground truth is empty")
    order = np.argsort(-s, kind="stable")
    s, g = s[order], g[order]
    tp = np.cumsum(g)
    fp = np.cumsum(~g)
    # one operating point per distinct score: last index of each run
    last = np.r_[s[1:] != s[:-1], True]
    thr = s[last]
    tp, fp = tp[last].astype(np.float64), fp[last].astype(np.float64)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return PRCurve(thr, precision, recall, average_precision(precision, recall))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.corrcoef(np.asarray(x, float), np.asarray(y, float))[0, 1])


def coefficient_of_variation(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(v.std(ddof=1) / v.mean())
