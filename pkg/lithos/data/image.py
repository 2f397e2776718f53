"""Raster primitives shared by the data pipeline and the explainers.

Bilinear resampling uses half-pixel centers: output pixel ``i`` of an axis
resized from ``n_in`` to ``n_out`` samples input coordinate
``(i + 0.5) * n_in / n_out - 0.5``, clamped to ``[0, n_in - 1]``, and blends
the two neighbours ``floor(src)`` and ``floor(src) + 1`` (clamped) linearly.
Rows are resampled first, then columns, in float64. Resizing to the same
extent is the identity.
"""

from __future__ import annotations

from os import PathLike
from pathlib import Path
from typing import Literal

import numpy as np
from PIL import Image, UnidentifiedImageError

from lithos.errors import DataError
from lithos.utils import round_half_up

Fill = Literal["reflect", "zero"]


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(array: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize an ``H x W`` or ``H x W x C`` array; returns float64."""
    if height < 1 or width < 1:
        raise ValueError(f"Target size must be positive, got {height} x {width}.")
    values = np.asarray(array, dtype=np.float64)
    lo, hi, w = _axis_weights(values.shape[0], height)
    shape = (-1,) + (1,) * (values.ndim - 1)
    values = values[lo] * (1 - w.reshape(shape)) + values[hi] * w.reshape(shape)
    lo, hi, w = _axis_weights(values.shape[1], width)
    shape = (1, -1) + (1,) * (values.ndim - 2)
    return values[:, lo] * (1 - w.reshape(shape)) + values[:, hi] * w.reshape(shape)


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of a uint8 RGB image to ``size x size``, rounded back to uint8."""
    return to_uint8(resize_bilinear(image, size, size))


def resize_nearest(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resize (half-pixel centers) for masks and label maps."""
    rows = np.minimum(
        np.floor((np.arange(height) + 0.5) * mask.shape[0] / height).astype(np.int64),
        mask.shape[0] - 1,
    )
    cols = np.minimum(
        np.floor((np.arange(width) + 0.5) * mask.shape[1] / width).astype(np.int64),
        mask.shape[1] - 1,
    )
    return np.asarray(mask)[rows][:, cols]


def to_uint8(values: np.ndarray) -> np.ndarray:
    return round_half_up(np.clip(values, 0.0, 255.0)).astype(np.uint8)


def center_crop(array: np.ndarray, height: int, width: int) -> np.ndarray:
    h, w = array.shape[:2]
    if height > h or width > w:
        raise ValueError(f"Cannot center-crop {h} x {w} to {height} x {width}.")
    top, left = (h - height) // 2, (w - width) // 2
    return array[top : top + height, left : left + width]


def _reflect(coords: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.zeros_like(coords)
    period = 2.0 * (n - 1)
    folded = np.mod(coords, period)
    return np.where(folded > n - 1, period - folded, folded)


def rotate(array: np.ndarray, degrees: float, fill: Fill = "reflect") -> np.ndarray:
    """Rotate counter-clockwise about the image center, keeping the extent.

    Samples bilinearly; ``fill`` decides what lies beyond the source border:
    mirrored content (``reflect``, for images) or zeros (``zero``, for maps
    rotated back onto the original frame). Returns float64.
    """
    values = np.asarray(array, dtype=np.float64)
    h, w = values.shape[:2]
    theta = np.deg2rad(degrees)
    cos, sin = np.cos(theta), np.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = ys - cy, xs - cx
    # inverse map: where does each output pixel come from (y axis points down)
    sx = cos * dx - sin * dy + cx
    sy = sin * dx + cos * dy + cy
    # snap float noise so right-angle rotations are exact permutations
    sx = np.where(np.abs(sx - np.round(sx)) < 1e-9, np.round(sx), sx)
    sy = np.where(np.abs(sy - np.round(sy)) < 1e-9, np.round(sy), sy)

    if fill == "reflect":
        sx, sy = _reflect(sx, w), _reflect(sy, h)
        inside = np.ones((h, w), dtype=bool)
    elif fill == "zero":
        inside = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
        sx, sy = np.clip(sx, 0, w - 1), np.clip(sy, 0, h - 1)
    else:
        raise ValueError(f"Unknown fill {fill!r}; use 'reflect' or 'zero'.")

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    wx, wy = sx - x0, sy - y0
    if values.ndim == 3:
        wx, wy, inside = wx[..., None], wy[..., None], inside[..., None]
    top = values[y0, x0] * (1 - wx) + values[y0, x1] * wx
    bottom = values[y1, x0] * (1 - wx) + values[y1, x1] * wx
    return np.where(inside, top * (1 - wy) + bottom * wy, 0.0)


# png io


def _open_png(path: Path) -> Image.Image:
    try:
        image = Image.open(path)
        image.load()
    except (UnidentifiedImageError, OSError) as error:
        raise DataError(f"{path} is not a readable image: {error}") from error
    if image.format != "PNG":
        raise DataError(f"{path} is {image.format}, only PNG is accepted.")
    return image


def read_image(path: str | PathLike[str]) -> np.ndarray:
    return np.asarray(_open_png(Path(path)).convert("RGB"), dtype=np.uint8)


def read_mask(path: str | PathLike[str]) -> np.ndarray:
    return np.asarray(_open_png(Path(path)).convert("L"), dtype=np.uint8) > 0


def write_image(path: str | PathLike[str], array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    array = np.asarray(array)
    if array.dtype == bool:
        Image.fromarray(array.astype(np.uint8) * 255).save(path, format="PNG")
    else:
        Image.fromarray(np.ascontiguousarray(array, dtype=np.uint8)).save(path, format="PNG")
    return path
