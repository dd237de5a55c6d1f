"""Shared raster and geometry types.

Rasters are plain numpy arrays:

* grayscale map: ``(H, W)`` float array with values in ``[0, 1]``
* binary mask: ``(H, W)`` bool array
* RGB image: ``(H, W, 3)`` float array with values in ``[0, 1]``
* feature map: ``(C, H, W)`` float array

Boxes live in continuous pixel coordinates. Pixel ``(i, j)`` (row, column)
covers the half-open square ``[j, j+1) x [i, i+1)`` and has its center at
``(j + 0.5, i + 0.5)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

MASK_RESOLUTION = 28

CAMOUFLAGE = "camouflage"
NON_CAMOUFLAGE = "non_camouflage"
LABELS = (CAMOUFLAGE, NON_CAMOUFLAGE)

MAIN = "main"
MIRROR = "mirror"
STREAMS = (MAIN, MIRROR)


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant."""


def as_grayscale(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValidationError(f"grayscale map must be a nonempty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError("grayscale map values must lie in [0, 1]")
    return arr


def as_binary(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.size == 0:
        raise ValidationError(f"binary mask must be a nonempty 2-D array, got shape {arr.shape}")
    if arr.dtype != bool:
        if not np.all((arr == 0) | (arr == 1)):
            raise ValidationError("binary mask values must be 0 or 1")
        arr = arr.astype(bool)
    return arr


def as_rgb(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValidationError(f"RGB image must have shape (H, W, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError("RGB values must lie in [0, 1]")
    return arr


def as_feature_map(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) == 0:
        raise ValidationError(f"feature map must have shape (C, H, W) with positive sizes, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("feature map values must be finite")
    return arr


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(np.isfinite(c) for c in coords):
            raise ValidationError(f"box coordinates must be finite: {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValidationError(f"box must satisfy x1 < x2 and y1 < y2: {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def translate(self, dx: float, dy: float) -> "Box":
        return Box(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)


@dataclass(frozen=True, eq=False)
class Detection:
    """One proposed object: box, class label, softmax confidence and a
    box-aligned soft mask."""

    box: Box
    label: str
    score: float
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValidationError(f"unknown label {self.label!r}")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score must lie in [0, 1], got {self.score}")
        mask = as_grayscale(self.mask)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        return (
            self.box == other.box
            and self.label == other.label
            and self.score == other.score
            and self.mask.shape == other.mask.shape
            and np.array_equal(self.mask, other.mask)
        )

    __hash__ = None


@dataclass(frozen=True)
class StreamOutput:
    stream: str
    image_width: int
    image_height: int
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        if self.stream not in STREAMS:
            raise ValidationError(f"unknown stream {self.stream!r}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValidationError("image dimensions must be positive")
        object.__setattr__(self, "detections", tuple(self.detections))


def flip_horizontal_image(img: np.ndarray) -> np.ndarray:
    """Mirror an image (or any ``(H, W, ...)`` raster) left to right."""
    return np.ascontiguousarray(np.asarray(img)[:, ::-1])


def flip_horizontal_box(b: Box, image_width: float) -> Box:
    return Box(image_width - b.x2, b.y1, image_width - b.x1, b.y2)


def flip_detection(d: Detection, image_width: float) -> Detection:
    return replace(d, box=flip_horizontal_box(d.box, image_width), mask=d.mask[:, ::-1].copy())


def flip_stream(s: StreamOutput) -> StreamOutput:
    """Flip every detection of a stream and swap its main/mirror tag."""
    other = MIRROR if s.stream == MAIN else MAIN
    dets = tuple(flip_detection(d, s.image_width) for d in s.detections)
    return replace(s, stream=other, detections=dets)


def _resample_axis(centers: np.ndarray, lo: float, extent: float, n: int):
    """Bilinear source indices/weights for sampling ``n`` mask cells spread
    over ``[lo, lo + extent)`` at the given image-pixel centers."""
    pos = (centers - lo) / extent * n - 0.5
    pos = np.clip(pos, 0.0, n - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    w1 = pos - i0
    return i0, i1, w1


def rasterize_mask(d: Detection, image_width: int, image_height: int) -> np.ndarray:
    """Paste a box-aligned detection mask into a full-image canvas.

    Pixels whose centers fall inside the (half-open) box receive the
    bilinearly resampled mask value; all other pixels are zero.
    """
    b = d.box
    cols = np.arange(image_width) + 0.5
    rows = np.arange(image_height) + 0.5
    in_x = (cols >= b.x1) & (cols < b.x2)
    in_y = (rows >= b.y1) & (rows < b.y2)
    if not in_x.any() or not in_y.any():
        raise ValidationError("empty projection: detection box does not cover any image pixel")

    mh, mw = d.mask.shape
    xs = cols[in_x]
    ys = rows[in_y]
    x0, x1, wx = _resample_axis(xs, b.x1, b.width, mw)
    y0, y1, wy = _resample_axis(ys, b.y1, b.height, mh)
    m = d.mask
    top = m[np.ix_(y0, x0)] * (1 - wx) + m[np.ix_(y0, x1)] * wx
    bottom = m[np.ix_(y1, x0)] * (1 - wx) + m[np.ix_(y1, x1)] * wx
    patch = top * (1 - wy)[:, None] + bottom * wy[:, None]

    out = np.zeros((image_height, image_width))
    out[np.ix_(np.flatnonzero(in_y), np.flatnonzero(in_x))] = np.clip(patch, 0.0, 1.0)
    return out


def read_gray_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def write_gray_png(path, values) -> None:
    arr = as_grayscale(values)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(Path(path))


def read_rgb_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_rgb_png(path, values) -> None:
    arr = as_rgb(values)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(Path(path))


def read_mask_png(path) -> np.ndarray:
    """Load a ground-truth map and binarize it at one half."""
    return read_gray_png(path) >= 0.5


def image_size(path) -> tuple[int, int]:
    """Return ``(width, height)`` without decoding pixel data."""
    with Image.open(path) as im:
        return im.size
