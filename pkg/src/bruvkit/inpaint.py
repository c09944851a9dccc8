"""Burned-in text/logo removal: find bright 8-connected blobs and cover
their bounding rectangles with black.

Bright shark bellies can get masked too; that is accepted behavior (the
black boxes act like Cutout augmentation downstream).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

#: Brightness above which a pixel counts as burned-in text.
DEFAULT_BRIGHTNESS_THRESHOLD = 230

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True, slots=True)
class RasterImage:
    """8-bit RGB raster; pixels is an (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"pixels must be (h, w, 3), got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, slots=True, order=True)
class PixelRect:
    """Inclusive pixel-coordinate rectangle."""

    top: int
    left: int
    bottom: int
    right: int


def grayscale(img: RasterImage) -> np.ndarray:
    """BT.601 luma, rounded half up to integers in [0, 255]."""
    p = img.pixels.astype(np.float64)
    return np.floor(0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2] + 0.5).astype(
        np.int64
    )


def find_bright_components(
    img: RasterImage, threshold: int = DEFAULT_BRIGHTNESS_THRESHOLD
) -> list[PixelRect]:
    """Tight bounding rectangles of 8-connected above-threshold blobs.

    One rectangle per component (per letter, for text), sorted by
    (top, left). The threshold comparison is strict.
    """
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold {threshold} outside [0, 255]")
    mask = grayscale(img) > threshold
    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    rects = []
    for sl_rows, sl_cols in ndimage.find_objects(labels):
        rects.append(
            PixelRect(sl_rows.start, sl_cols.start, sl_rows.stop - 1, sl_cols.stop - 1)
        )
    rects.sort()
    return rects


def inpaint(
    img: RasterImage, threshold: int = DEFAULT_BRIGHTNESS_THRESHOLD
) -> RasterImage:
    """Fill every bright-component rectangle with black; idempotent."""
    rects = find_bright_components(img, threshold)
    if not rects:
        return img
    pixels = img.pixels.copy()
    for r in rects:
        pixels[r.top : r.bottom + 1, r.left : r.right + 1] = 0
    return RasterImage(pixels=pixels)


# ---------------------------------------------------------------------------
# Raster file adapters

def read_ppm(path: str | Path) -> RasterImage:
    """Binary (P6) portable pixmap, maxval 255."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    # Header is 4 whitespace-separated tokens; '#' starts a comment.
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    raster = data[pos : pos + width * height * 3]
    if len(raster) != width * height * 3:
        raise ValueError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()
    return RasterImage(pixels=pixels)


def write_ppm(img: RasterImage, path: str | Path) -> None:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())


def read_image(path: str | Path) -> RasterImage:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    return RasterImage(pixels=np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8))


def write_image(img: RasterImage, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(img, path)
    else:
        Image.fromarray(img.pixels).save(path)
