"""Boosted crowd/non-crowd window classifier and score-image segmentation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .features import (
    FEATURE_LAYOUT_VERSION,
    column_histograms,
    feature_length,
    features_from_columns,
    n_cells,
    window_starts,
)

log = logging.getLogger(__name__)

SEG_MODEL_FORMAT = "homg-seg"
_BIG = float(np.finfo(np.float64).max)
_SMOOTH = 1e-8


class LayoutMismatch(ValueError):
    pass


def default_layout(w_p: int = 8, n_bins: int = 8) -> Dict[str, int]:
    cells = n_cells(w_p)
    return {
        "version": FEATURE_LAYOUT_VERSION,
        "w_p": w_p,
        "n_bins": n_bins,
        "cells": cells,
        "length": feature_length(n_bins, cells),
    }


@dataclass
class DecisionTree:
    """Depth-2 tree: root node 0, left child 1, right child 2, leaves 0..3.

    ``x[f] <= threshold`` goes left.
    """

    features: Tuple[int, int, int]
    thresholds: Tuple[float, float, float]
    leaves: Tuple[float, float, float, float]

    def leaf_index(self, x: np.ndarray) -> int:
        if x[self.features[0]] <= self.thresholds[0]:
            return 0 if x[self.features[1]] <= self.thresholds[1] else 1
        return 2 if x[self.features[2]] <= self.thresholds[2] else 3

    def __call__(self, x: np.ndarray) -> float:
        return self.leaves[self.leaf_index(x)]

    def predict(self, X: np.ndarray) -> np.ndarray:
        f, t = self.features, self.thresholds
        root = X[:, f[0]] <= t[0]
        idx = np.where(root, np.where(X[:, f[1]] <= t[1], 0, 1), np.where(X[:, f[2]] <= t[2], 2, 3))
        return np.asarray(self.leaves, dtype=np.float64)[idx]


@dataclass
class SegModel:
    trees: List[DecisionTree]
    weights: np.ndarray
    layout: Dict[str, int] = field(default_factory=default_layout)
    threshold: float = 1.0
    seed: int = 0
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if len(self.weights) != len(self.trees):
            raise ValueError("one weight per tree required")
        self._pack()

    def _pack(self):
        self._feat = np.array([t.features for t in self.trees], dtype=np.intp).reshape(-1, 3)
        self._thr = np.array([t.thresholds for t in self.trees], dtype=np.float64).reshape(-1, 3)
        self._leaf = np.array([t.leaves for t in self.trees], dtype=np.float64).reshape(-1, 4)

    @property
    def n_features(self) -> int:
        return int(self.layout["length"])

    def check_layout(self, layout: Optional[Dict] = None, length: Optional[int] = None) -> None:
        if layout is not None:
            for key in ("version", "w_p", "n_bins", "cells"):
                if layout.get(key) != self.layout.get(key):
                    raise LayoutMismatch(f"feature layout {key}={layout.get(key)} does not match model ({self.layout.get(key)})")
        if length is not None and length != self.n_features:
            raise LayoutMismatch(f"feature length {length} does not match model ({self.n_features})")

    def _tree_outputs(self, X: np.ndarray, sl: slice) -> np.ndarray:
        feat, thr, leaf = self._feat[sl], self._thr[sl], self._leaf[sl]
        root = X[:, feat[:, 0]] <= thr[:, 0]
        left = X[:, feat[:, 1]] <= thr[:, 1]
        right = X[:, feat[:, 2]] <= thr[:, 2]
        idx = np.where(root, np.where(left, 0, 1), np.where(right, 2, 3))
        return leaf[np.arange(len(leaf))[None, :], idx]

    def decision_function(self, X: np.ndarray, reject_below: Optional[float] = None,
                          chunk: int = 10) -> np.ndarray:
        """Weighted sum of tree outputs; positive means crowd.

        With ``reject_below`` set, rows whose partial sum can no longer reach
        the bound stop early and keep their (sub-bound) partial score.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        self.check_layout(length=X.shape[1])
        n, T = X.shape[0], len(self.trees)
        if T == 0 or n == 0:
            return np.zeros(n)
        if reject_below is None:
            return self._tree_outputs(X, slice(None)) @ self.weights
        score = np.zeros(n)
        active = np.arange(n)
        remaining = np.concatenate([np.cumsum(np.abs(self.weights)[::-1])[::-1], [0.0]])
        for start in range(0, T, chunk):
            if active.size == 0:
                break
            sl = slice(start, min(start + chunk, T))
            score[active] += self._tree_outputs(X[active], sl) @ self.weights[sl]
            keep = score[active] + remaining[sl.stop] >= reject_below
            active = active[keep]
        return score

    def classify_window(self, f, layout: Optional[Dict] = None) -> float:
        self.check_layout(layout=layout)
        v = f.vector() if hasattr(f, "vector") else np.asarray(f, dtype=np.float64)
        return float(self.decision_function(v)[0])

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> Dict:
        return {
            "format": SEG_MODEL_FORMAT,
            "format_version": 1,
            "layout": dict(self.layout),
            "threshold": float(self.threshold),
            "seed": int(self.seed),
            "metadata": self.metadata,
            "trees": [
                {"features": [int(v) for v in t.features],
                 "thresholds": [float(v) for v in t.thresholds],
                 "leaves": [float(v) for v in t.leaves]}
                for t in self.trees
            ],
            "weights": [float(w) for w in self.weights],
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "SegModel":
        if d.get("format") != SEG_MODEL_FORMAT:
            raise ValueError(f"not a segmentation model (format={d.get('format')!r})")
        trees = [DecisionTree(tuple(t["features"]), tuple(t["thresholds"]), tuple(t["leaves"]))
                 for t in d["trees"]]
        return cls(trees, np.array(d["weights"], dtype=np.float64), layout=d["layout"],
                   threshold=d["threshold"], seed=d.get("seed", 0), metadata=d.get("metadata", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "SegModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- training -----------------------------------------------------------------


def _gini(wp: np.ndarray, wn: np.ndarray) -> np.ndarray:
    tot = wp + wn
    with np.errstate(invalid="ignore", divide="ignore"):
        g = 2.0 * wp * wn / tot
    return np.where(tot > 0, g, 0.0)


class _SplitSearch:
    """Exhaustive threshold search over presorted features."""

    def __init__(self, X: np.ndarray):
        self.X = X
        self.XT = np.ascontiguousarray(X.T)
        self.order = np.argsort(self.XT, axis=1, kind="stable")

    def best(self, subset: np.ndarray, wp: np.ndarray, wn: np.ndarray) -> Tuple[int, float]:
        d = self.XT.shape[0]
        k = int(subset.sum())
        if k < 2:
            return 0, _BIG
        sub = self.order[subset[self.order]].reshape(d, k)
        xs = np.take_along_axis(self.XT, sub, axis=1)
        cp = np.cumsum(wp[sub], axis=1)
        cn = np.cumsum(wn[sub], axis=1)
        tp, tn = cp[:, -1:], cn[:, -1:]
        cost = _gini(cp, cn) + _gini(tp - cp, tn - cn)
        cost = cost[:, :-1]
        cost[xs[:, :-1] >= xs[:, 1:]] = np.inf
        j, i = np.unravel_index(np.argmin(cost), cost.shape)
        if not np.isfinite(cost[j, i]):
            return 0, _BIG
        a, b = xs[j, i], xs[j, i + 1]
        thr = a + (b - a) / 2.0
        if not a <= thr < b:
            thr = a
        return int(j), float(thr)


def _leaf_value(wp: float, wn: float) -> float:
    if wp > wn:
        return 1.0
    if wn > wp:
        return -1.0
    return 0.0


def fit_tree(search: _SplitSearch, y: np.ndarray, w: np.ndarray) -> DecisionTree:
    X = search.X
    wp = np.where(y > 0, w, 0.0)
    wn = np.where(y < 0, w, 0.0)
    everything = np.ones(len(y), dtype=bool)
    f0, t0 = search.best(everything, wp, wn)
    left = X[:, f0] <= t0
    f1, t1 = search.best(left, wp, wn)
    f2, t2 = search.best(~left, wp, wn)
    parts = [left & (X[:, f1] <= t1), left & (X[:, f1] > t1),
             ~left & (X[:, f2] <= t2), ~left & (X[:, f2] > t2)]
    leaves = tuple(_leaf_value(wp[p].sum(), wn[p].sum()) for p in parts)
    return DecisionTree((f0, f1, f2), (t0, t1, t2), leaves)


def train(X: np.ndarray, y: np.ndarray, rounds: int = 100, seed: int = 0,
          layout: Optional[Dict] = None, history: Optional[list] = None) -> SegModel:
    """Discrete AdaBoost over depth-2 trees with abstaining (zero) leaves.

    ``y`` holds +1 (crowd) / -1 (non-crowd). The exponential loss after each
    round is appended to ``history`` when given. Boosting stops early if a
    round's tree is no better than chance on the weighted sample.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("training needs both crowd and non-crowd samples")
    if layout is None:
        layout = {"version": FEATURE_LAYOUT_VERSION, "w_p": None, "n_bins": None,
                  "cells": None, "length": X.shape[1]}
    search = _SplitSearch(X)
    n = len(y)
    w = np.full(n, 1.0 / n)
    F = np.zeros(n)
    trees, alphas = [], []
    for _ in range(rounds):
        tree = fit_tree(search, y, w)
        h = tree.predict(X)
        margin = y * h
        w_right = w[margin > 0].sum()
        w_wrong = w[margin < 0].sum()
        if w_right <= w_wrong:
            break
        alpha = 0.5 * np.log((w_right + _SMOOTH) / (w_wrong + _SMOOTH))
        trees.append(tree)
        alphas.append(alpha)
        F += alpha * h
        w = w * np.exp(-alpha * margin)
        w /= w.sum()
        if history is not None:
            history.append(float(np.mean(np.exp(-y * F))))
    if not trees:
        raise ValueError("no weak learner beats chance on this data")
    if len(trees) < rounds:
        log.info("boosting stopped after %d of %d rounds", len(trees), rounds)
    return SegModel(trees, np.array(alphas), layout=layout, seed=seed,
                    metadata={"rounds_requested": rounds, "n_train": n,
                              "n_pos": int((y > 0).sum()), "n_neg": int((y < 0).sum())})


def mine_negatives(model: SegModel, pool: np.ndarray, budget: int) -> np.ndarray:
    """Indices of the ``budget`` highest-scoring pool rows.

    Ties keep pool order, so a pool laid out in (frame, strip, x) order
    breaks ties the same way.
    """
    if budget <= 0 or len(pool) == 0:
        return np.zeros(0, dtype=np.intp)
    scores = model.decision_function(pool)
    order = np.argsort(-scores, kind="stable")
    return order[:budget]


# -- inference ----------------------------------------------------------------


@dataclass
class ScoreImage:
    C: np.ndarray
    mask: np.ndarray


def window_source_cols(geom, starts: np.ndarray, cells: int) -> Tuple[np.ndarray, np.ndarray]:
    sx = geom.scale_x
    c0 = np.clip(np.round(starts / sx).astype(np.int64), 0, geom.frame_width)
    c1 = np.clip(np.round((starts + cells) / sx).astype(np.int64), 0, geom.frame_width)
    return c0, c1


def strip_source_rows(geom, frame_height: int, lo: int = 0) -> Tuple[int, int]:
    r0 = max(geom.source_top_row, lo, 0)
    r1 = min(geom.source_top_row + geom.source_height, frame_height)
    return r0, r1


def accumulate_scores(frame_shape: Tuple[int, int], geometries: Sequence, starts_list, scores_list,
                      cells: int, lo: int = 0) -> np.ndarray:
    """Spread clamped window scores uniformly over their source rectangles."""
    C = np.zeros(frame_shape, dtype=np.float64)
    for geom, starts, scores in zip(geometries, starts_list, scores_list):
        pos = scores > 0
        if not pos.any():
            continue
        r0, r1 = strip_source_rows(geom, frame_shape[0], lo)
        if r1 <= r0:
            continue
        c0, c1 = window_source_cols(geom, starts[pos], cells)
        profile = np.zeros(frame_shape[1], dtype=np.float64)
        for a, b, s in zip(c0, c1, scores[pos]):
            profile[a:b] += s
        C[r0:r1] += profile
    return C


def segment_frame(model: SegModel, geometries: Sequence, motions: Sequence, frame_shape: Tuple[int, int],
                  stride: int = 2, threshold: Optional[float] = None, lo: int = 0,
                  early_exit: bool = True) -> ScoreImage:
    """Score every sliding window, accumulate into C and threshold into the mask."""
    w_p, n_bins = model.layout["w_p"], model.layout["n_bins"]
    cells = n_cells(w_p)
    threshold = model.threshold if threshold is None else threshold
    starts_list, scores_list, feats, spans = [], [], [], []
    for geom, m in zip(geometries, motions):
        g = getattr(geom, "geometry", geom)
        col = column_histograms(m, n_bins)
        starts = window_starts(col.shape[0], cells, stride)
        starts_list.append(starts)
        feats.append(features_from_columns(col, starts, cells, g.norm_height))
    if feats:
        X = np.vstack(feats)
        scores = model.decision_function(X, reject_below=0.0 if early_exit else None)
        bounds = np.cumsum([0] + [len(f) for f in feats])
        scores_list = [scores[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    geoms = [getattr(g, "geometry", g) for g in geometries]
    C = accumulate_scores(frame_shape, geoms, starts_list, scores_list, cells, lo)
    return ScoreImage(C, C >= threshold)


def positives_from_heads(heads: Sequence[Tuple[float, float]], geometries: Sequence, motions: Sequence,
                         calib, w_p: int = 8, n_bins: int = 8,
                         frame_shape: Optional[Tuple[int, int]] = None) -> Tuple[np.ndarray, int]:
    """One window per head, centred on it, from the strip best matching the person box.

    Returns (features, skipped) where ``skipped`` counts heads outside the
    analyzable region.
    """
    cells = n_cells(w_p)
    geoms = [getattr(g, "geometry", g) for g in geometries]
    lo = calib.first_analyzable_row()
    out, skipped = [], 0
    cols = {}
    for hx, hy in heads:
        if hy < lo or (frame_shape is not None and not (0 <= hy < frame_shape[0] and 0 <= hx < frame_shape[1])):
            skipped += 1
            continue
        try:
            _, y0, _, y1 = calib.person_box(hx, hy)
        except ValueError:
            skipped += 1
            continue
        k = best_strip_for_rows(geoms, y0, y1)
        if k is None:
            skipped += 1
            continue
        g = geoms[k]
        if k not in cols:
            cols[k] = column_histograms(motions[k], n_bins)
        x0 = int(round(hx * g.scale_x - cells / 2.0))
        out.append(window_feature_at(cols[k], x0, cells, g.norm_height))
    if skipped:
        log.debug("skipped %d heads outside the analyzable region", skipped)
    feats = np.vstack(out) if out else np.zeros((0, feature_length(n_bins, cells)))
    return feats, skipped


def best_strip_for_rows(geoms: Sequence, y0: float, y1: float) -> Optional[int]:
    best, best_iou = None, 0.0
    for k, g in enumerate(geoms):
        a, b = g.source_top_row, g.source_top_row + g.source_height
        inter = min(b, y1) - max(a, y0)
        if inter <= 0:
            continue
        iou = inter / (max(b, y1) - min(a, y0))
        if iou > best_iou:
            best, best_iou = k, iou
    return best


def window_feature_at(col_hist: np.ndarray, x0: int, cells: int, h_k: int) -> np.ndarray:
    """Feature of a single window that may hang over either strip edge."""
    width, n_bins = col_hist.shape
    x0 = min(max(x0, -cells), width)
    pad = np.zeros((cells, n_bins))
    padded = np.vstack([pad, col_hist, pad])
    return features_from_columns(padded, np.array([x0 + cells]), cells, h_k)[0]
