"""Synthetic directory-per-class image corpus.

Every class gets a prototype (base color, stripe orientation, stripe
frequency) so that color, texture and shape descriptors all carry class
information. Images are 128x128 PNGs with uniform +/-20 channel jitter.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

SIZE = 128
JITTER = 20


@dataclass(frozen=True)
class Prototype:
    color: np.ndarray  # RGB, float
    angle: float  # radians
    frequency: float  # stripe cycles across the image


def draw_prototype(rng: np.random.Generator) -> Prototype:
    return Prototype(
        color=rng.uniform(40, 255, size=3),
        angle=float(rng.uniform(0.0, np.pi)),
        frequency=float(rng.uniform(3.0, 12.0)),
    )


def render(proto: Prototype, rng: np.random.Generator) -> np.ndarray:
    """One noisy instance of a class prototype as an (128, 128, 3) uint8 array."""
    y, x = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    phase = rng.uniform(0.0, 2 * np.pi)
    t = (x * np.cos(proto.angle) + y * np.sin(proto.angle)) / SIZE
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * proto.frequency * t + phase)
    # dark stripes at 35% of the base color
    shade = 0.35 + 0.65 * stripes
    img = shade[..., None] * proto.color[None, None, :]
    img += rng.uniform(-JITTER, JITTER, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def class_names(n_classes: int) -> list[str]:
    width = max(2, len(str(n_classes - 1)))
    return [f"class_{i:0{width}d}" for i in range(n_classes)]


def synthesize(out_dir, n_classes: int = 20, per_class: int = 50, seed: int = 0) -> list[Path]:
    if n_classes < 1 or per_class < 1:
        raise ValueError("need at least one class and one image per class")
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    protos = [draw_prototype(rng) for _ in range(n_classes)]
    width = max(3, len(str(per_class - 1)))
    written = []
    for name, proto in zip(class_names(n_classes), protos):
        cdir = out / name
        cdir.mkdir(parents=True, exist_ok=True)
        for j in range(per_class):
            path = cdir / f"img_{j:0{width}d}.png"
            Image.fromarray(render(proto, rng)).save(path, format="PNG")
            written.append(path)
    return written
