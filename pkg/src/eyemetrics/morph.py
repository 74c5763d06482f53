"""Flat binary erosion/dilation and the composite pupil cleanup filter."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imagecore import BinaryImage, invert

# 7x7 circular template, radius 3.
PUPIL_DISK = (
    (0, 0, 0, 1, 0, 0, 0),
    (0, 0, 1, 1, 1, 0, 0),
    (0, 1, 1, 1, 1, 1, 0),
    (1, 1, 1, 1, 1, 1, 1),
    (0, 1, 1, 1, 1, 1, 0),
    (0, 0, 1, 1, 1, 0, 0),
    (0, 0, 0, 1, 0, 0, 0),
)


@dataclass(frozen=True, eq=False)
class StructuringElement:
    mask: np.ndarray

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2 == 0:
            raise ValueError(f"structuring element must be square with odd side, got {m.shape}")
        if not m.any():
            raise ValueError("structuring element has no active cells")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def size(self) -> int:
        return self.mask.shape[0]

    @property
    def origin(self) -> tuple[int, int]:
        c = self.size // 2
        return (c, c)

    def offsets(self) -> list[tuple[int, int]]:
        """Active cells as ``(dy, dx)`` relative to the origin."""
        c = self.size // 2
        ys, xs = np.nonzero(self.mask)
        return [(int(y) - c, int(x) - c) for y, x in zip(ys, xs)]

    def reflected(self) -> "StructuringElement":
        return StructuringElement(self.mask[::-1, ::-1])

    @classmethod
    def disk(cls) -> "StructuringElement":
        return cls(np.array(PUPIL_DISK, dtype=bool))

    @classmethod
    def from_text(cls, text: str) -> "StructuringElement":
        rows = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            cells = line.replace(",", " ").split()
            if len(cells) == 1 and len(cells[0]) > 1:
                cells = list(cells[0])
            if any(c not in ("0", "1") for c in cells):
                raise ValueError(f"structuring element rows hold only 0/1, got {line!r}")
            rows.append([c == "1" for c in cells])
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("structuring element rows are ragged or empty")
        return cls(np.array(rows, dtype=bool))

    @classmethod
    def load(cls, path) -> "StructuringElement":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class MorphParams:
    n1: int = 2
    n2: int = 3

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < self.n1:
            raise ValueError(f"need 0 <= n1 <= n2, got n1={self.n1}, n2={self.n2}")


def _shifted_views(pixels: np.ndarray, offsets, sign: int):
    h, w = pixels.shape
    pad = max(max(abs(dy), abs(dx)) for dy, dx in offsets)
    padded = np.zeros((h + 2 * pad, w + 2 * pad), dtype=bool)
    padded[pad:pad + h, pad:pad + w] = pixels
    for dy, dx in offsets:
        oy, ox = pad + sign * dy, pad + sign * dx
        yield padded[oy:oy + h, ox:ox + w]


def erode(f: BinaryImage, se: StructuringElement | None = None) -> BinaryImage:
    """True where every SE cell lands on foreground; off-image counts as background."""
    se = se or StructuringElement.disk()
    out = np.ones(f.pixels.shape, dtype=bool)
    for view in _shifted_views(f.pixels, se.offsets(), +1):
        out &= view
    return BinaryImage(out)


def dilate(f: BinaryImage, se: StructuringElement | None = None) -> BinaryImage:
    """True where any cell of the reflected SE lands on foreground."""
    se = se or StructuringElement.disk()
    out = np.zeros(f.pixels.shape, dtype=bool)
    for view in _shifted_views(f.pixels, se.offsets(), -1):
        out |= view
    return BinaryImage(out)


def _repeat(op, f, se, n):
    for _ in range(n):
        f = op(f, se)
    return f


def opening(f: BinaryImage, se: StructuringElement | None = None) -> BinaryImage:
    return dilate(erode(f, se), se)


def closing(f: BinaryImage, se: StructuringElement | None = None) -> BinaryImage:
    return erode(dilate(f, se), se)


def pupil_filter(f: BinaryImage, se: StructuringElement | None = None,
                 p: MorphParams = MorphParams()) -> BinaryImage:
    """``erode^(n2-n1)(dilate^n2(erode^n1(~f)))``.

    ``f`` is the thresholded picture with the pupil drawn black (False), so
    the complement turns the pupil into the foreground blob that the
    erosions clean and the dilations restore.
    """
    se = se or StructuringElement.disk()
    g = invert(f)
    g = _repeat(erode, g, se, p.n1)
    g = _repeat(dilate, g, se, p.n2)
    return _repeat(erode, g, se, p.n2 - p.n1)
