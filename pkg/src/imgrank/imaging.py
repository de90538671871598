"""Corpus loading and visual feature extraction.

Each image is reduced to a nonnegative 167-dimensional descriptor made of
three normalized histograms::

    color   [0, 72)    HSV histogram, 8 hue x 3 saturation x 3 value bins
    texture [72, 131)  uniform LBP(8, 1) histogram, 58 uniform codes + 1 catch-all
    shape   [131, 167) Sobel edge-orientation histogram, 36 bins of 10 degrees
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

SIZE = 128
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

COLOR_BINS = (8, 3, 3)
COLOR_DIM = 72
TEXTURE_DIM = 59
SHAPE_DIM = 36
FEATURE_DIM = COLOR_DIM + TEXTURE_DIM + SHAPE_DIM

COLOR_SLICE = slice(0, COLOR_DIM)
TEXTURE_SLICE = slice(COLOR_DIM, COLOR_DIM + TEXTURE_DIM)
SHAPE_SLICE = slice(COLOR_DIM + TEXTURE_DIM, FEATURE_DIM)

EDGE_THRESHOLD = 16.0

# 3x3 ring, clockwise from the top-left corner; neighbor b carries weight 2**b.
LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


class CorpusError(Exception):
    """Raised for an unusable corpus layout."""


class ImageDecodeError(Exception):
    """Raised when an image file cannot be decoded."""

    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"cannot decode image {self.path}: {reason}")


class FeatureFileError(Exception):
    """Raised for a malformed feature cache."""


@dataclass
class ImageRecord:
    id: str
    path: str
    label: str
    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"{self.id}: pixels must be H x W x 3, got {px.shape}")
        if px.shape[0] < 3 or px.shape[1] < 3:
            raise ValueError(f"{self.id}: image must be at least 3x3, got {px.shape[:2]}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise ValueError(f"{self.id}: channel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        self.pixels = px


@dataclass
class FeatureVector:
    id: str
    label: str | None
    values: np.ndarray


@dataclass
class Dataset:
    records: list[FeatureVector]
    classes: list[str] = field(default_factory=list)

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("record ids must be unique")
        if not self.classes:
            self.classes = sorted({r.label for r in self.records})
        missing = {r.label for r in self.records} - set(self.classes)
        if missing:
            raise ValueError(f"labels not listed in classes: {sorted(missing)}")

    def __len__(self):
        return len(self.records)

    @property
    def X(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, FEATURE_DIM))
        return np.vstack([r.values for r in self.records])

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.records]

    @classmethod
    def from_vectors(cls, vectors: Iterable[FeatureVector]) -> "Dataset":
        """Build a dataset in canonical (class, id) order."""
        records = sorted(vectors, key=lambda r: (r.label, r.id))
        return cls(records, sorted({r.label for r in records}))


# ---------------------------------------------------------------------------
# Corpus I/O
# ---------------------------------------------------------------------------

def load_corpus(root) -> list[tuple[Path, str]]:
    """List ``(path, label)`` pairs for a directory-per-class corpus.

    Classes and files are both sorted lexicographically, so the listing does
    not depend on filesystem scan order.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root {root} does not exist")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise CorpusError(f"no class directories under {root}")
    listing = []
    for cdir in class_dirs:
        images = sorted(
            p for p in cdir.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if not images:
            raise CorpusError(f"class {cdir.name} has no images")
        listing.extend((p, cdir.name) for p in images)
    return listing


def read_image(path, label: str, root=None) -> ImageRecord:
    path = Path(path)
    try:
        with Image.open(path) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageDecodeError(path, exc) from exc
    rid = f"{label}/{path.name}" if root is None else Path(os.path.relpath(path, root)).as_posix()
    try:
        return ImageRecord(id=rid, path=str(path), label=label, pixels=pixels)
    except ValueError as exc:
        raise ImageDecodeError(path, exc) from exc


# ---------------------------------------------------------------------------
# Descriptors
# ---------------------------------------------------------------------------

def preprocess(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbor resample to 128x128 and compute the integer luma.

    Source row for output row ``i`` is ``floor(i * H / 128)``, likewise for
    columns. Luma is ``0.299 R + 0.587 G + 0.114 B`` rounded half up.
    """
    px = np.asarray(pixels)
    h, w = px.shape[:2]
    rows = (np.arange(SIZE) * h) // SIZE
    cols = (np.arange(SIZE) * w) // SIZE
    rgb = px[rows[:, None], cols[None, :]].astype(np.uint8)
    f = rgb.astype(np.float64)
    luma = 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]
    gray = np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)
    return rgb, gray


def rgb_to_hsv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized RGB (0..255) to HSV with H in degrees [0, 360), S, V in [0, 1]."""
    f = np.asarray(rgb, dtype=np.float64) / 255.0
    r, g, b = f[..., 0], f[..., 1], f[..., 2]
    mx = f.max(axis=-1)
    mn = f.min(axis=-1)
    delta = mx - mn
    v = mx
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)

    safe = np.where(delta > 0, delta, 1.0)
    h = np.zeros_like(mx)
    rmax = (delta > 0) & (mx == r)
    gmax = (delta > 0) & (mx == g) & ~rmax
    bmax = (delta > 0) & ~rmax & ~gmax
    h = np.where(rmax, np.mod((g - b) / safe, 6.0), h)
    h = np.where(gmax, (b - r) / safe + 2.0, h)
    h = np.where(bmax, (r - g) / safe + 4.0, h)
    h = np.mod(h * 60.0, 360.0)
    return h, s, v


def _bin(values: np.ndarray, upper: float, bins: int) -> np.ndarray:
    idx = np.floor(values / upper * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def color_histogram(rgb: np.ndarray) -> np.ndarray:
    h, s, v = rgb_to_hsv(rgb)
    nh, ns, nv = COLOR_BINS
    idx = _bin(h, 360.0, nh) * (ns * nv) + _bin(s, 1.0, ns) * nv + _bin(v, 1.0, nv)
    counts = np.bincount(idx.ravel(), minlength=COLOR_DIM).astype(np.float64)
    return counts / counts.sum()


def _transitions(code: int) -> int:
    bits = [(code >> b) & 1 for b in range(8)]
    return sum(bits[b] != bits[(b + 1) % 8] for b in range(8))


def _uniform_lut() -> np.ndarray:
    lut = np.full(256, TEXTURE_DIM - 1, dtype=np.int64)
    uniform = [c for c in range(256) if _transitions(c) <= 2]
    assert len(uniform) == TEXTURE_DIM - 1
    lut[uniform] = np.arange(len(uniform))
    return lut


UNIFORM_LBP_BIN = _uniform_lut()


def lbp_codes(gray: np.ndarray) -> np.ndarray:
    """LBP(8, 1) code of every interior pixel, shape ``(H-2, W-2)``."""
    g = np.asarray(gray, dtype=np.int32)
    h, w = g.shape
    center = g[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.int64)
    for b, (dy, dx) in enumerate(LBP_OFFSETS):
        neigh = g[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        codes |= (neigh >= center).astype(np.int64) << b
    return codes


def texture_descriptor(gray: np.ndarray) -> np.ndarray:
    bins = UNIFORM_LBP_BIN[lbp_codes(gray)]
    counts = np.bincount(bins.ravel(), minlength=TEXTURE_DIM).astype(np.float64)
    return counts / counts.sum()


def sobel(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interior Sobel responses ``(gx, gy)``; x grows rightward, y downward."""
    g = np.asarray(gray, dtype=np.float64)
    h, w = g.shape

    def win(dy, dx):
        return g[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]

    gx = (win(-1, 1) + 2 * win(0, 1) + win(1, 1)) - (win(-1, -1) + 2 * win(0, -1) + win(1, -1))
    gy = (win(1, -1) + 2 * win(1, 0) + win(1, 1)) - (win(-1, -1) + 2 * win(-1, 0) + win(-1, 1))
    return gx, gy


def shape_descriptor(gray: np.ndarray) -> np.ndarray:
    gx, gy = sobel(gray)
    mag = np.hypot(gx, gy)
    keep = mag > EDGE_THRESHOLD
    if not np.any(keep):
        return np.full(SHAPE_DIM, 1.0 / SHAPE_DIM)
    angle = np.mod(np.degrees(np.arctan2(gy[keep], gx[keep])), 360.0)
    idx = _bin(angle, 360.0, SHAPE_DIM)
    counts = np.bincount(idx, minlength=SHAPE_DIM).astype(np.float64)
    return counts / counts.sum()


def describe_pixels(pixels: np.ndarray) -> np.ndarray:
    rgb, gray = preprocess(pixels)
    return np.concatenate([
        color_histogram(rgb),
        texture_descriptor(gray),
        shape_descriptor(gray),
    ])


def extract_features(record: ImageRecord) -> FeatureVector:
    return FeatureVector(record.id, record.label, describe_pixels(record.pixels))


def extract_corpus(root) -> Dataset:
    """Read and describe every image below ``root``.

    Decode failures surface as :class:`ImageDecodeError` naming the file.
    """
    root = Path(root)
    vectors = []
    for path, label in load_corpus(root):
        vectors.append(extract_features(read_image(path, label, root=root)))
    return Dataset.from_vectors(vectors)


# ---------------------------------------------------------------------------
# Feature cache
# ---------------------------------------------------------------------------

def feature_header() -> list[str]:
    return ["id", "label"] + [f"f{i}" for i in range(FEATURE_DIM)]


def format_features(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(feature_header())
    for rec in dataset.records:
        writer.writerow([rec.id, rec.label] + [f"{v:.9g}" for v in rec.values])
    return buf.getvalue()


def write_features(dataset: Dataset, path) -> None:
    Path(path).write_text(format_features(dataset), encoding="utf-8")


def read_features(path) -> Dataset:
    """Parse a feature cache written by :func:`write_features`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FeatureFileError(f"{path}: empty feature file") from None
        if header[:2] != ["id", "label"] or len(header) < 3:
            raise FeatureFileError(f"{path}: line 1: bad header")
        dim = len(header) - 2
        vectors = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != dim + 2:
                raise FeatureFileError(
                    f"{path}: line {line}: expected {dim + 2} fields, got {len(row)}")
            try:
                values = np.array([float(v) for v in row[2:]])
            except ValueError as exc:
                raise FeatureFileError(f"{path}: line {line}: {exc}") from None
            if not np.all(np.isfinite(values)) or np.any(values < 0):
                raise FeatureFileError(
                    f"{path}: line {line}: features must be finite and nonnegative")
            vectors.append(FeatureVector(row[0], row[1], values))
    if not vectors:
        raise FeatureFileError(f"{path}: no feature rows")
    try:
        return Dataset.from_vectors(vectors)
    except ValueError as exc:
        raise FeatureFileError(f"{path}: {exc}") from None


def check_blocks(values: Sequence[float], atol: float = 1e-9) -> bool:
    v = np.asarray(values)
    if v.shape != (FEATURE_DIM,) or not np.all(np.isfinite(v)) or np.any(v < 0):
        return False
    return all(abs(v[s].sum() - 1.0) <= atol for s in (COLOR_SLICE, TEXTURE_SLICE, SHAPE_SLICE))
