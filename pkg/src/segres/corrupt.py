"""Reproducible degradations and synthetic test scenes.

Degradations compose as blur, then noise, then pixel dropping. Every
generator is a pure function of its arguments and seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from segres.core import Codebook, ImageField, InvalidValueError, Kernel, LabelMap, ObservationMask
from segres.operators import LinearOperator


@dataclass(frozen=True)
class BlurSpec:
    """``kind`` is "none", "gaussian" (size, std) or "motion" (length, angle)."""

    kind: str = "none"
    size: int = 0
    std: float = 0.0
    length: int = 0
    angle: float = 0.0

    @classmethod
    def parse(cls, text: Optional[str]) -> "BlurSpec":
        """Parse ``none``, ``gaussian:SIZE:STD`` or ``motion:LEN:ANGLE``."""
        if text is None or text.strip().lower() in ("", "none"):
            return cls()
        parts = text.strip().lower().split(":")
        try:
            if parts[0] == "gaussian" and len(parts) == 3:
                return cls("gaussian", size=int(parts[1]), std=float(parts[2]))
            if parts[0] == "motion" and len(parts) == 3:
                return cls("motion", length=int(parts[1]), angle=float(parts[2]))
        except ValueError:
            pass
        raise ValueError(f"bad blur spec {text!r}; expected none, gaussian:SIZE:STD or motion:LEN:ANGLE")

    def __str__(self):
        if self.kind == "gaussian":
            return f"gaussian:{self.size}:{self.std:g}"
        if self.kind == "motion":
            return f"motion:{self.length}:{self.angle:g}"
        return "none"


@dataclass(frozen=True)
class DegradeSpec:
    noise_variance: float = 0.0
    blur: BlurSpec = field(default_factory=BlurSpec)
    drop_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.blur, str):
            object.__setattr__(self, "blur", BlurSpec.parse(self.blur))
        if self.noise_variance < 0:
            raise InvalidValueError("noise variance must be >= 0")
        if not 0 <= self.drop_fraction < 1:
            raise InvalidValueError("drop fraction must be in [0, 1)")


def _streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def add_gaussian_noise(img: ImageField, variance: float, seed: int = 0) -> ImageField:
    """Add zero-mean Gaussian noise, then clip to [0, 1]."""
    if variance < 0:
        raise InvalidValueError("noise variance must be >= 0")
    if variance == 0:
        return img
    rng = np.random.default_rng(seed)
    noisy = img.data + rng.normal(0.0, math.sqrt(variance), img.data.shape)
    return ImageField(np.clip(noisy, 0.0, 1.0))


def make_blur_kernel(spec: BlurSpec) -> Optional[Kernel]:
    """Normalized blur kernel for ``spec``; None when there is no blur."""
    if spec.kind == "none":
        return None
    if spec.kind == "gaussian":
        if spec.size < 1 or spec.size % 2 == 0:
            raise InvalidValueError(f"Gaussian kernel size must be odd, got {spec.size}")
        if spec.std <= 0:
            raise InvalidValueError("Gaussian std must be > 0")
        r = np.arange(spec.size) - spec.size // 2
        taps = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * spec.std**2))
        return Kernel(taps / taps.sum())
    if spec.kind == "motion":
        if spec.length < 1:
            raise InvalidValueError("motion length must be >= 1")
        theta = math.radians(spec.angle)
        t = np.linspace(-(spec.length - 1) / 2, (spec.length - 1) / 2, spec.length)
        # rows grow downward, so a positive angle points up
        cols = np.rint(t * math.cos(theta)).astype(int)
        rows = np.rint(-t * math.sin(theta)).astype(int)
        rh, rw = np.abs(rows).max(), np.abs(cols).max()
        taps = np.zeros((2 * rh + 1, 2 * rw + 1))
        taps[rows + rh, cols + rw] = 1.0
        return Kernel(taps / taps.sum())
    raise InvalidValueError(f"unknown blur kind {spec.kind!r}")


def blur(img: ImageField, kernel: Optional[Kernel]) -> ImageField:
    if kernel is None:
        return img
    return ImageField(LinearOperator(kernel).apply(img.data))


def drop_pixels(img: ImageField, fraction: float, seed: int = 0) -> Tuple[ImageField, ObservationMask]:
    """Zero exactly ``floor(fraction * H * W)`` pixel sites chosen by a seeded permutation."""
    if not 0 <= fraction < 1:
        raise InvalidValueError("drop fraction must be in [0, 1)")
    h, w = img.shape
    count = int(math.floor(fraction * h * w))
    mask = np.ones(h * w)
    if count:
        mask[np.random.default_rng(seed).permutation(h * w)[:count]] = 0.0
    mask = mask.reshape(h, w)
    return ImageField(img.data * mask), ObservationMask(mask)


def degrade(img: ImageField, spec: DegradeSpec) -> Tuple[ImageField, ObservationMask, Optional[Kernel]]:
    """Blur, add noise, drop pixels. Returns the image, its mask and the kernel used."""
    noise_seed, drop_seed = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(spec.seed).spawn(2))
    kernel = make_blur_kernel(spec.blur)
    out = blur(img, kernel)
    out = add_gaussian_noise(out, spec.noise_variance, noise_seed)
    out, mask = drop_pixels(out, spec.drop_fraction, drop_seed)
    return out, mask, kernel


# --- synthetic scenes -------------------------------------------------------

SCENES = ("shapes2", "barcode", "shapes4", "stars5", "rgb")

RGB_PALETTE = np.array(
    [
        [0.85, 0.15, 0.15],
        [0.15, 0.70, 0.20],
        [0.20, 0.25, 0.90],
        [0.95, 0.85, 0.10],
        [0.60, 0.20, 0.75],
        [0.10, 0.80, 0.80],
    ]
)


def _grid(n):
    y, x = np.mgrid[0:n, 0:n].astype(np.float64)
    return (y + 0.5) / n, (x + 0.5) / n


def _disk(y, x, cy, cx, r):
    return (y - cy) ** 2 + (x - cx) ** 2 <= r * r


def _rect(y, x, y0, x0, y1, x1):
    return (y >= y0) & (y < y1) & (x >= x0) & (x < x1)


def _triangle(y, x, pts):
    (ay, ax), (by, bx), (cy, cx) = pts

    def side(py, px, qy, qx):
        return (x - px) * (qy - py) - (y - py) * (qx - px)

    s1, s2, s3 = side(ay, ax, by, bx), side(by, bx, cy, cx), side(cy, cx, ay, ax)
    return ((s1 >= 0) & (s2 >= 0) & (s3 >= 0)) | ((s1 <= 0) & (s2 <= 0) & (s3 <= 0))


def _star(y, x, cy, cx, r, points=5, depth=0.45, rot=0.0):
    ang = np.arctan2(y - cy, x - cx) - rot
    rad = np.hypot(y - cy, x - cx)
    # piecewise-linear star outline between inner and outer radius
    seg = (ang * points / (2 * np.pi)) % 1.0
    frac = np.abs(seg - 0.5) * 2.0
    edge = r * ((1 - depth) + depth * frac)
    return rad <= edge


def _labels_shapes2(n, rng):
    y, x = _grid(n)
    j = rng.uniform(-0.03, 0.03, size=8)
    lab = np.zeros((n, n), dtype=np.int64)
    lab[_disk(y, x, 0.28 + j[0], 0.28 + j[1], 0.17)] = 1
    lab[_rect(y, x, 0.15 + j[2], 0.58, 0.45 + j[2], 0.85)] = 1
    lab[_triangle(y, x, [(0.62, 0.12 + j[3]), (0.90, 0.12 + j[3]), (0.90, 0.48 + j[3])])] = 1
    lab[((y - 0.75 - j[4]) / 0.13) ** 2 + ((x - 0.72) / 0.2) ** 2 <= 1] = 1
    return lab


def _labels_barcode(n, rng):
    cells = 16
    bits = rng.integers(0, 2, size=(cells, cells))
    # corner finder squares, as on 2-D barcodes
    for r0, c0 in ((0, 0), (0, cells - 5), (cells - 5, 0)):
        bits[r0 : r0 + 5, c0 : c0 + 5] = 1
        bits[r0 + 1 : r0 + 4, c0 + 1 : c0 + 4] = 0
        bits[r0 + 2, c0 + 2] = 1
    idx = (np.arange(n) * cells) // n
    return bits[idx[:, None], idx[None, :]].astype(np.int64)


def _labels_shapes4(n, rng):
    y, x = _grid(n)
    j = rng.uniform(-0.02, 0.02, size=6)
    lab = np.zeros((n, n), dtype=np.int64)
    lab[_rect(y, x, 0.06 + j[0], 0.06, 0.56, 0.58 + j[1])] = 1
    lab[_disk(y, x, 0.31 + j[2], 0.32, 0.15)] = 3
    lab[_disk(y, x, 0.70, 0.70 + j[3], 0.25)] = 2
    lab[_triangle(y, x, [(0.62, 0.06), (0.95, 0.06), (0.95, 0.44 + j[4])])] = 3
    lab[_rect(y, x, 0.08, 0.68 + j[5], 0.36, 0.94)] = 3
    return lab


def _labels_stars5(n, rng):
    y, x = _grid(n)
    j = rng.uniform(-0.02, 0.02, size=8)
    lab = np.zeros((n, n), dtype=np.int64)
    centers = [(0.27, 0.27), (0.27, 0.73), (0.73, 0.27), (0.73, 0.73)]
    for i, (cy, cx) in enumerate(centers):
        lab[_star(y, x, cy + j[2 * i], cx + j[2 * i + 1], 0.21, rot=0.3 * i)] = i + 1
    return lab


def _labels_mosaic(n, k, rng):
    # Voronoi cells of jittered seeds, labelled cyclically so every phase appears
    y, x = _grid(n)
    m = 2 * k
    seeds = rng.uniform(0.08, 0.92, size=(m, 2))
    d = (y[None] - seeds[:, 0, None, None]) ** 2 + (x[None] - seeds[:, 1, None, None]) ** 2
    return (np.argmin(d, axis=0) % k).astype(np.int64)


def parse_scene(kind: str) -> Tuple[str, int]:
    """Normalize a scene name; returns ``(family, phases)``."""
    k = kind.strip().lower().replace("_", "-")
    fixed = {"shapes2": 2, "barcode": 2, "shapes4": 4, "stars5": 5}
    if k in fixed:
        return k, fixed[k]
    if k.startswith("rgb"):
        num = k[3:].lstrip("-")
        phases = int(num) if num else 3
        if not 2 <= phases <= len(RGB_PALETTE):
            raise InvalidValueError(f"RGB mosaic supports 2..{len(RGB_PALETTE)} phases")
        return "rgb", phases
    raise InvalidValueError(f"unknown scene {kind!r}; known: shapes2, barcode, shapes4, stars5, rgb-K")


def make_scene(kind: str, size: int = 128, seed: int = 0) -> Tuple[ImageField, LabelMap, Codebook]:
    """Synthetic piecewise-constant scene with its ground-truth labels and levels.

    Kinds: ``shapes2``, ``barcode``, ``shapes4``, ``stars5``, ``rgb-K``
    (``rgb`` alone means K=3). Gray levels are evenly spaced in [0, 1].
    """
    if size < 32:
        raise InvalidValueError(f"scene size must be >= 32, got {size}")
    family, k = parse_scene(kind)
    rng = np.random.default_rng(seed)
    if family == "shapes2":
        lab = _labels_shapes2(size, rng)
    elif family == "barcode":
        lab = _labels_barcode(size, rng)
    elif family == "shapes4":
        lab = _labels_shapes4(size, rng)
    elif family == "stars5":
        lab = _labels_stars5(size, rng)
    else:
        lab = _labels_mosaic(size, k, rng)

    if family == "rgb":
        levels = RGB_PALETTE[:k]
        order = np.argsort(levels[:, 0], kind="stable")
        levels = levels[order]
    else:
        levels = np.linspace(0.0, 1.0, k)[:, None]
    img = levels[lab].transpose(2, 0, 1)
    return ImageField(img), LabelMap(lab, k), Codebook(levels)
