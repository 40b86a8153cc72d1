"""8-bit image files: binary/ASCII PGM and PPM, and PNG through Pillow.

Pixel values map to [0, 1] as v / 255. Format is chosen by extension.
"""
from __future__ import annotations

import os
import re

import numpy as np

from segres.core import ImageField, LabelMap, ObservationMask


class ImageFormatError(ValueError):
    pass


_PNM_EXT = {".pgm", ".ppm", ".pnm"}
_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pnm_header(buf: bytes):
    pos = 0
    fields = []
    while len(fields) < 4:
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise ImageFormatError("truncated PNM header")
        fields.append(m.group(1))
        pos = m.end()
    return fields, pos


def read_pnm(path) -> np.ndarray:
    """Return an ``(H, W)`` or ``(H, W, 3)`` uint8 array."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] not in (b"P2", b"P3", b"P5", b"P6"):
        raise ImageFormatError(f"{path}: not a PGM/PPM file")
    (magic, w, h, maxval), pos = _pnm_header(buf)
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 256:
        raise ImageFormatError(f"{path}: only 8-bit PNM supported (maxval {maxval})")
    ch = 3 if magic in (b"P3", b"P6") else 1
    n = w * h * ch
    if magic in (b"P5", b"P6"):
        raw = np.frombuffer(buf, dtype=np.uint8, count=n, offset=pos + 1)
    else:
        raw = np.array(buf[pos:].split()[:n], dtype=np.int64)
        if raw.size != n:
            raise ImageFormatError(f"{path}: truncated pixel data")
    data = raw.astype(np.float64)
    if maxval != 255:
        data = np.rint(data * 255.0 / maxval)
    data = data.astype(np.uint8)
    return data.reshape(h, w, ch) if ch == 3 else data.reshape(h, w)


def write_pnm(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise ImageFormatError(f"cannot write array of shape {arr.shape} as PNM")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_bytes(path) -> np.ndarray:
    ext = os.path.splitext(str(path))[1].lower()
    if ext in _PNM_EXT:
        return read_pnm(path)
    if ext == ".png":
        from PIL import Image

        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if "A" in im.mode or im.mode in ("P", "CMYK") else "L")
            return np.asarray(im, dtype=np.uint8).copy()
    raise ImageFormatError(f"unsupported image extension {ext!r}")


def write_bytes(path, arr: np.ndarray) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    arr = np.asarray(arr, dtype=np.uint8)
    if ext in _PNM_EXT:
        write_pnm(path, arr)
    elif ext == ".png":
        from PIL import Image

        Image.fromarray(arr).save(path)
    else:
        raise ImageFormatError(f"unsupported image extension {ext!r}")


def to_bytes(img: ImageField) -> np.ndarray:
    a = np.rint(np.clip(img.to_hwc(), 0.0, 1.0) * 255.0).astype(np.uint8)
    return a[..., 0] if img.channels == 1 else a


def read_image(path) -> ImageField:
    return ImageField.from_hwc(read_bytes(path).astype(np.float64) / 255.0)


def write_image(path, img: ImageField) -> None:
    write_bytes(path, to_bytes(img))


def read_mask(path) -> ObservationMask:
    """Masks are gray images: 0 is missing, anything else observed."""
    a = read_bytes(path)
    if a.ndim == 3:
        a = a.max(axis=2)
    return ObservationMask((a > 0).astype(np.float64))


def write_mask(path, mask: ObservationMask) -> None:
    write_bytes(path, (mask.data > 0).astype(np.uint8) * 255)


def read_labels(path) -> LabelMap:
    a = read_bytes(path)
    if a.ndim == 3:
        a = a[..., 0]
    return LabelMap(a.astype(np.int64), int(a.max()) + 1)


def write_labels(path, labels: LabelMap) -> None:
    if labels.phases > 256:
        raise ImageFormatError("at most 256 labels fit in an 8-bit image")
    write_bytes(path, labels.labels.astype(np.uint8))
