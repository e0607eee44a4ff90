"""Frame sequences, head annotations, dataset manifests and raster I/O."""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import cv2
import numpy as np

from .calib import CalibrationModel

IMAGE_SUFFIXES = {".png", ".pgm", ".ppm", ".pbm", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff"}
LUMA = (0.299, 0.587, 0.114)


class DataError(Exception):
    pass


@dataclass
class Frame:
    index: int
    timestamp: float
    pixels: np.ndarray
    path: Optional[Path] = None


@dataclass
class HeadAnnotation:
    frame_id: int
    heads: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.heads)


def to_luma(img: np.ndarray) -> np.ndarray:
    """8-bit grayscale from a gray, RGB or RGBA raster (channels in RGB order)."""
    if img.ndim == 2:
        gray = img
    elif img.ndim == 3 and img.shape[2] in (3, 4):
        r, g, b = (img[..., i].astype(np.float64) for i in range(3))
        gray = LUMA[0] * r + LUMA[1] * g + LUMA[2] * b
    elif img.ndim == 3 and img.shape[2] == 1:
        gray = img[..., 0]
    else:
        raise DataError(f"unsupported raster shape {img.shape}")
    if gray.dtype == np.uint16:
        gray = gray / 257.0
    return np.clip(np.rint(gray), 0, 255).astype(np.uint8)


def read_gray(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DataError(f"cannot read image {path}")
    if img.ndim == 3 and img.shape[2] >= 3:
        img = img[..., [2, 1, 0]]  # cv2 hands back BGR
    return to_luma(img)


def write_gray(path, img: np.ndarray) -> None:
    if not cv2.imwrite(str(path), np.ascontiguousarray(img)):
        raise DataError(f"cannot write image {path}")


def write_mask(path, mask: np.ndarray) -> None:
    write_gray(path, np.where(mask, 255, 0).astype(np.uint8))


def read_mask(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise DataError(f"cannot read mask {path}")
    return img != 0


def write_float_pgm(path, raster: np.ndarray, vmax: Optional[float] = None) -> None:
    """Debug dump of a nonnegative raster, scaled to 8 bits."""
    vmax = float(raster.max()) if vmax is None else vmax
    scaled = np.zeros(raster.shape, np.uint8) if vmax <= 0 else np.clip(raster * (255.0 / vmax), 0, 255)
    write_gray(path, np.rint(scaled).astype(np.uint8))


def list_frame_files(directory) -> List[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"frames directory not found: {d}")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"no frames in {d}")
    return files


def iter_frames(directory, fps: float) -> Iterator[Frame]:
    """Lexicographically ordered frames with timestamps ``index / fps``."""
    if fps <= 0:
        raise DataError("fps must be positive")
    for i, path in enumerate(list_frame_files(directory)):
        yield Frame(i, i / fps, read_gray(path), path)


def load_frames(directory, fps: float) -> List[Frame]:
    return list(iter_frames(directory, fps))


def save_frames(directory, frames: Sequence[np.ndarray], suffix: str = ".png") -> List[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, f in enumerate(frames):
        p = d / f"{i:06d}{suffix}"
        write_gray(p, f)
        paths.append(p)
    return paths


# -- annotations ----------------------------------------------------------------


def load_annotations(path) -> List[HeadAnnotation]:
    """Read ``frame_id,x,y`` rows; a row with empty x and y marks an empty annotated frame."""
    by_frame: Dict[int, HeadAnnotation] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, 1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip() == "frame_id":
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected frame_id,x,y")
            try:
                fid = int(row[0])
                ann = by_frame.setdefault(fid, HeadAnnotation(fid))
                if row[1].strip() or row[2].strip():
                    ann.heads.append((float(row[1]), float(row[2])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return [by_frame[k] for k in sorted(by_frame)]


def save_annotations(path, annotations: Sequence[HeadAnnotation]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_id", "x", "y"])
        for ann in sorted(annotations, key=lambda a: a.frame_id):
            if not ann.heads:
                w.writerow([ann.frame_id, "", ""])
            for x, y in ann.heads:
                w.writerow([ann.frame_id, repr(float(x)), repr(float(y))])


# -- manifests ------------------------------------------------------------------


@dataclass
class ViewEntry:
    view_id: str
    frames_dir: Path
    fps: float
    annotations: Path
    calibration: Path
    roi: Optional[Path] = None

    def load_calibration(self) -> CalibrationModel:
        return CalibrationModel.load(self.calibration)

    def load_annotations(self) -> List[HeadAnnotation]:
        return load_annotations(self.annotations)

    def load_roi(self) -> Optional[np.ndarray]:
        return None if self.roi is None else read_mask(self.roi)


@dataclass
class DatasetManifest:
    views: List[ViewEntry]
    path: Optional[Path] = None

    def view(self, view_id: str) -> ViewEntry:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise DataError(f"unknown view id {view_id!r}")

    @property
    def view_ids(self) -> List[str]:
        return [v.view_id for v in self.views]

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"manifest not found: {path}")
        cp = configparser.ConfigParser()
        cp.read(path)
        base = path.parent
        views = []
        for section in cp.sections():
            view_id = section[5:].strip() if section.startswith("view ") else section
            sec = cp[section]
            try:
                entry = ViewEntry(
                    view_id=view_id,
                    frames_dir=base / sec["frames"],
                    fps=float(sec["fps"]),
                    annotations=base / sec["annotations"],
                    calibration=base / sec["calibration"],
                    roi=(base / sec["roi"]) if sec.get("roi") else None,
                )
            except KeyError as exc:
                raise DataError(f"{path}: view {view_id!r} lacks key {exc}") from None
            if entry.fps <= 0:
                raise DataError(f"{path}: view {view_id!r} has non-positive fps")
            for p in (entry.frames_dir, entry.annotations, entry.calibration, entry.roi):
                if p is not None and not p.exists():
                    raise DataError(f"{path}: view {view_id!r} references missing path {p}")
            views.append(entry)
        if not views:
            raise DataError(f"{path}: no views")
        return cls(views, path)

    def save(self, path) -> None:
        path = Path(path)
        base = path.parent.resolve()
        cp = configparser.ConfigParser()

        def rel(p):
            return str(Path(p).resolve().relative_to(base))

        for v in self.views:
            sec = {"frames": rel(v.frames_dir), "fps": repr(v.fps),
                   "annotations": rel(v.annotations), "calibration": rel(v.calibration)}
            if v.roi is not None:
                sec["roi"] = rel(v.roi)
            cp[f"view {v.view_id}"] = sec
        with open(path, "w") as fh:
            cp.write(fh)
        self.path = path


def leave_one_out_split(manifest: DatasetManifest, held_out_view: str, train_cap: int = 50,
                        annotations: Optional[Dict[str, List[HeadAnnotation]]] = None,
                        ) -> Tuple[Dict[str, List[HeadAnnotation]], Dict[str, List[HeadAnnotation]]]:
    """Train on the first ``train_cap`` annotated frames of every other view.

    ``annotations`` may supply already-loaded (and possibly pre-filtered)
    annotation lists per view.
    """
    if len(manifest.views) < 2:
        raise DataError("leave-one-out needs at least two views")
    manifest.view(held_out_view)
    train, test = {}, {}
    for v in manifest.views:
        anns = annotations[v.view_id] if annotations is not None else v.load_annotations()
        anns = sorted(anns, key=lambda a: a.frame_id)
        if v.view_id == held_out_view:
            test[v.view_id] = anns
        else:
            train[v.view_id] = anns[:train_cap]
    return train, test
