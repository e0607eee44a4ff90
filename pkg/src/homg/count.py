"""Zero-intercept epsilon-insensitive linear regression of people count on R."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

COUNT_MODEL_FORMAT = "homg-count"


def svr_objective(w: float, R: np.ndarray, y: np.ndarray, epsilon: float, C: float) -> float:
    r = np.abs(y - w * R) - epsilon
    return 0.5 * w * w + C * float(np.maximum(r, 0.0).sum())


def _solve(R: np.ndarray, y: np.ndarray, epsilon: float, C: float) -> float:
    """Exact minimizer of the 1-D objective over w (unconstrained).

    The derivative is ``w + C * c(w)`` with ``c`` piecewise constant and
    nondecreasing, changing only at the breakpoints ``(y +- eps) / R``.
    """
    keep = R > 0
    R, y = R[keep], y[keep]
    upper = (y + epsilon) / R   # above this, the term pushes w down (+R)
    lower = (y - epsilon) / R   # below this, the term pushes w up (-R)
    pts = np.concatenate([upper, lower])
    jumps = np.concatenate([R, R])  # crossing any breakpoint upward adds R_i to c
    order = np.argsort(pts, kind="stable")
    pts, jumps = pts[order], jumps[order]
    # c on the interval left of every breakpoint: all lower terms active
    c = -R.sum() + np.concatenate([[0.0], np.cumsum(jumps)])
    # interval k spans (pts[k-1], pts[k]) with pts[-1] = -inf, pts[m] = +inf
    lo = np.concatenate([[-np.inf], pts])
    hi = np.concatenate([pts, [np.inf]])
    stationary = -C * c
    inside = (stationary > lo) & (stationary < hi)
    if inside.any():
        return float(stationary[np.argmax(inside)])
    # otherwise the minimum sits on a breakpoint where the derivative changes sign
    d_left = pts + C * c[:-1]
    d_right = pts + C * c[1:]
    hit = (d_left <= 0) & (d_right >= 0)
    return float(pts[np.argmax(hit)])


@dataclass(frozen=True)
class CountModel:
    slope: float
    epsilon: float = 0.5
    C_reg: float = 1.0
    metadata: Dict = field(default_factory=dict, compare=False)

    def predict(self, R) -> np.ndarray:
        """Raw estimate ``slope * R``; exactly zero at R = 0."""
        return self.slope * np.asarray(R, dtype=np.float64)

    def predict_rounded(self, R) -> np.ndarray:
        return np.rint(self.predict(R))

    def to_dict(self) -> Dict:
        return {"format": COUNT_MODEL_FORMAT, "format_version": 1, "slope": self.slope,
                "epsilon": self.epsilon, "C_reg": self.C_reg, "metadata": self.metadata}

    @classmethod
    def from_dict(cls, d: Dict) -> "CountModel":
        if d.get("format") != COUNT_MODEL_FORMAT:
            raise ValueError(f"not a count model (format={d.get('format')!r})")
        return cls(float(d["slope"]), float(d["epsilon"]), float(d["C_reg"]), d.get("metadata", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "CountModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit(samples: Sequence[Tuple[float, float]], epsilon: float = 0.5, C_reg: float = 1.0,
        metadata: Dict = None) -> CountModel:
    """Fit ``y ~ w R`` minimizing ``w^2/2 + C * sum(max(0, |y - wR| - eps))`` with w >= 0."""
    arr = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    R, y = arr[:, 0], arr[:, 1]
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite")
    if np.any(R < 0):
        raise ValueError("R must be nonnegative")
    if not np.any(R > 0):
        raise ValueError("feature degenerate: all R are zero")
    w = max(0.0, _solve(R, y, epsilon, C_reg))
    meta = {"n_samples": int(len(R))}
    meta.update(metadata or {})
    return CountModel(w, epsilon, C_reg, meta)
