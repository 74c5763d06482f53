"""Image containers and the small set of raster primitives every stage shares.

Coordinates follow one convention throughout the package: ``x`` is the column
index, ``y`` the row index, origin at the top-left pixel. Arrays are stored
row-major as ``pixels[y, x]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GrayImage",
    "BinaryImage",
    "Histogram",
    "IntegralImage",
    "Rect",
    "compute_histogram",
    "compute_integral",
    "invert",
    "crop",
    "rgb_to_gray",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle, ``(x, y)`` is the top-left corner."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rect extents must be >= 1, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h

    def inside(self, width: int, height: int) -> bool:
        return (self.x >= 0 and self.y >= 0
                and self.x + self.w <= width and self.y + self.h <= height)

    def offset(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x + dx, self.y + dy, self.w, self.h)

    def iou(self, other: "Rect") -> float:
        ix = max(0, min(self.x + self.w, other.x + other.w) - max(self.x, other.x))
        iy = max(0, min(self.y + self.h, other.y + other.h) - max(self.y, other.y))
        inter = ix * iy
        return inter / float(self.area + other.area - inter)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


class GrayImage:
    """Immutable 8-bit gray raster.

    Built from anything ``np.asarray`` accepts with shape ``(height, width)``.
    Values outside 0..255 are rejected rather than clipped.
    """

    __slots__ = ("_pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim != 2:
            raise ValueError(f"gray image must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("intensities must lie in [0, 255]")
            if np.issubdtype(arr.dtype, np.floating) and not np.all(arr == np.round(arr)):
                raise ValueError("intensities must be integers")
            arr = arr.astype(np.uint8)
        self._pixels = _frozen(np.array(arr, dtype=np.uint8, copy=True))

    @classmethod
    def from_flat(cls, width: int, height: int, pixels) -> "GrayImage":
        flat = np.asarray(pixels)
        if flat.size != width * height:
            raise ValueError(f"expected {width * height} pixels, got {flat.size}")
        return cls(flat.reshape(height, width))

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def size(self) -> int:
        return self._pixels.size

    def __getitem__(self, key):
        return self._pixels[key]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and bool(
            np.array_equal(self._pixels, other._pixels))

    def __hash__(self):
        return hash((self._pixels.shape, self._pixels.tobytes()))

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


class BinaryImage:
    """Immutable boolean raster, ``True`` is foreground (white)."""

    __slots__ = ("_pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim != 2:
            raise ValueError(f"binary image must be 2-D, got shape {arr.shape}")
        self._pixels = _frozen(np.array(arr, dtype=bool, copy=True))

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def count(self) -> int:
        return int(self._pixels.sum())

    def __getitem__(self, key):
        return self._pixels[key]

    def __eq__(self, other):
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and bool(
            np.array_equal(self._pixels, other._pixels))

    def __hash__(self):
        return hash((self._pixels.shape, self._pixels.tobytes()))

    def __repr__(self):
        return f"BinaryImage({self.width}x{self.height}, fg={self.count})"


@dataclass(frozen=True, eq=False)
class Histogram:
    bins: np.ndarray  # 256 integer counts
    total: int

    def __post_init__(self):
        if self.bins.shape != (256,):
            raise ValueError("histogram needs exactly 256 bins")
        if int(self.bins.sum()) != self.total:
            raise ValueError("histogram total does not match bin mass")


class IntegralImage:
    """Summed-area table with a zero first row and column.

    ``sums[y, x]`` holds the sum of ``pixels[:y, :x]``, so any rectangle sum
    is four lookups. int64 is wide enough for 255 * (2**31) pixels.
    """

    __slots__ = ("sums", "sq_sums")

    def __init__(self, sums: np.ndarray, sq_sums: np.ndarray):
        self.sums = _frozen(sums)
        self.sq_sums = _frozen(sq_sums)

    @property
    def width(self) -> int:
        return self.sums.shape[1] - 1

    @property
    def height(self) -> int:
        return self.sums.shape[0] - 1

    def rect_sum(self, x: int, y: int, w: int, h: int) -> int:
        s = self.sums
        return int(s[y + h, x + w] - s[y, x + w] - s[y + h, x] + s[y, x])

    def rect_sq_sum(self, x: int, y: int, w: int, h: int) -> int:
        s = self.sq_sums
        return int(s[y + h, x + w] - s[y, x + w] - s[y + h, x] + s[y, x])


def compute_histogram(img: GrayImage) -> Histogram:
    if img.size == 0:
        raise ValueError("cannot build a histogram of an empty image")
    bins = np.bincount(img.pixels.ravel(), minlength=256).astype(np.int64)
    return Histogram(bins=_frozen(bins), total=img.size)


def compute_integral(img: GrayImage) -> IntegralImage:
    if img.size == 0:
        raise ValueError("cannot integrate an empty image")
    px = img.pixels.astype(np.int64)
    sums = np.zeros((img.height + 1, img.width + 1), dtype=np.int64)
    sq = np.zeros_like(sums)
    sums[1:, 1:] = px.cumsum(axis=0).cumsum(axis=1)
    sq[1:, 1:] = (px * px).cumsum(axis=0).cumsum(axis=1)
    return IntegralImage(sums, sq)


def invert(img: BinaryImage) -> BinaryImage:
    return BinaryImage(~img.pixels)


def crop(img: GrayImage, r: Rect) -> GrayImage:
    if not r.inside(img.width, img.height):
        raise ValueError(f"{r} lies outside the {img.width}x{img.height} image")
    return GrayImage(img.pixels[r.y:r.y + r.h, r.x:r.x + r.w])


def rgb_to_gray(rgb) -> GrayImage:
    """Fixed-weight luma conversion (0.299, 0.587, 0.114), rounded half up."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ValueError("expected an (h, w, 3) color array")
    y = 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
    return GrayImage(np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8))
