"""Haar-like features over integral images.

A feature is a list of weighted rectangles inside a base window. Values are
normalized by window area and intensity standard deviation so that one
trained threshold holds across lighting and scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..imagecore import GrayImage, IntegralImage, Rect

# Windows flatter than this are treated as having unit deviation.
MIN_STD = 1.0


@dataclass(frozen=True)
class HaarFeature:
    rects: tuple  # ((x, y, w, h, weight), ...) in base-window pixels
    base: tuple = (24, 24)
    kind: str = ""

    def __post_init__(self):
        bw, bh = self.base
        for x, y, w, h, _ in self.rects:
            if w < 1 or h < 1 or x < 0 or y < 0 or x + w > bw or y + h > bh:
                raise ValueError(f"rect {(x, y, w, h)} not inside base window {self.base}")

    @property
    def mass(self) -> int:
        """Signed weighted area; zero for a zero-mean template."""
        return sum(w * h * wt for _, _, w, h, wt in self.rects)

    def scaled_rects(self, scale: float):
        """Rects at ``scale`` with the base area each one stands for."""
        bw, bh = self.base
        ww, wh = _round(bw * scale), _round(bh * scale)
        out = []
        for x, y, w, h, wt in self.rects:
            sx, sy = _round(x * scale), _round(y * scale)
            sw = max(1, min(_round(w * scale), ww - sx))
            sh = max(1, min(_round(h * scale), wh - sy))
            out.append((sx, sy, sw, sh, wt * w * h))
        return out

    def to_list(self):
        return [list(r) for r in self.rects]


def _round(v: float) -> int:
    return int(math.floor(v + 0.5))


def window_scale(feat_base, window: Rect) -> float:
    return window.w / float(feat_base[0])


def window_std(ii: IntegralImage, window: Rect) -> float:
    n = float(window.w * window.h)
    mean = ii.rect_sum(window.x, window.y, window.w, window.h) / n
    var = ii.rect_sq_sum(window.x, window.y, window.w, window.h) / n - mean * mean
    return max(math.sqrt(max(var, 0.0)), MIN_STD)


def eval_feature(ii: IntegralImage, feat: HaarFeature, window: Rect,
                 std: float | None = None) -> float:
    """Normalized feature value of ``window`` (x - 2y style sums, then scaled).

    Each rect contributes ``weight * base_area * mean_intensity``; the total
    is divided by the base window area and by the window's deviation.
    """
    if not window.inside(ii.width, ii.height):
        raise ValueError(f"window {window} outside {ii.width}x{ii.height} image")
    scale = window_scale(feat.base, window)
    if std is None:
        std = window_std(ii, window)
    acc = 0.0
    for sx, sy, sw, sh, mass in feat.scaled_rects(scale):
        s = ii.rect_sum(window.x + sx, window.y + sy, sw, sh)
        acc += mass * (s / float(sw * sh))
    return acc / (float(feat.base[0] * feat.base[1]) * std)


# --- vectorized evaluation ----------------------------------------------

def _box(sums: np.ndarray, x, y, w, h):
    return sums[y + h, x + w] - sums[y, x + w] - sums[y + h, x] + sums[y, x]


def windows_std(ii: IntegralImage, xs: np.ndarray, ys: np.ndarray, ww: int, wh: int) -> np.ndarray:
    n = float(ww * wh)
    mean = _box(ii.sums, xs, ys, ww, wh) / n
    var = _box(ii.sq_sums, xs, ys, ww, wh) / n - mean * mean
    return np.maximum(np.sqrt(np.maximum(var, 0.0)), MIN_STD)


def eval_feature_windows(ii: IntegralImage, feat: HaarFeature, xs, ys, scale: float,
                         std: np.ndarray) -> np.ndarray:
    """:func:`eval_feature` for many same-size windows at once.

    Arithmetic runs in the same order as the scalar path, so results match
    it bit for bit.
    """
    acc = np.zeros(len(xs))
    for sx, sy, sw, sh, mass in feat.scaled_rects(scale):
        s = _box(ii.sums, xs + sx, ys + sy, sw, sh)
        acc = acc + mass * (s / float(sw * sh))
    return acc / (float(feat.base[0] * feat.base[1]) * std)


def feature_matrix(samples, bank, chunk: int = 1024) -> np.ndarray:
    """Values of every bank feature on every base-size sample, ``(F, N)``."""
    base = bank[0].base
    bw, bh = base
    stack = np.stack([np.asarray(s.pixels if isinstance(s, GrayImage) else s, dtype=np.int64)
                      for s in samples])
    if stack.shape[1:] != (bh, bw):
        raise ValueError(f"samples must be {bw}x{bh}, got {stack.shape[2]}x{stack.shape[1]}")
    n = len(stack)
    sums = np.zeros((n, bh + 1, bw + 1), dtype=np.int64)
    sums[:, 1:, 1:] = stack.cumsum(1).cumsum(2)
    sq = np.zeros_like(sums)
    sq[:, 1:, 1:] = (stack * stack).cumsum(1).cumsum(2)
    area = float(bw * bh)
    mean = sums[:, bh, bw] / area
    var = sq[:, bh, bw] / area - mean * mean
    std = np.maximum(np.sqrt(np.maximum(var, 0.0)), MIN_STD)
    flat = sums.reshape(n, -1).T  # (cells, N)
    stride = bw + 1

    out = np.empty((len(bank), n))
    for start in range(0, len(bank), chunk):
        part = bank[start:start + chunk]
        k = max(len(f.rects) for f in part)
        geo = np.zeros((len(part), k, 5), dtype=np.int64)
        for i, f in enumerate(part):
            for j, (x, y, w, h, wt) in enumerate(f.rects):
                geo[i, j] = (x, y, w, h, wt)
        x, y, w, h, wt = (geo[..., c] for c in range(5))
        # Unused slots have zero weight and a harmless 0x0 box.
        box = (flat[(y + h) * stride + x + w] - flat[y * stride + x + w]
               - flat[(y + h) * stride + x] + flat[y * stride + x])
        mass = (wt * w * h).astype(np.float64)
        safe_area = np.maximum(w * h, 1).astype(np.float64)
        acc = np.zeros((len(part), n))
        for j in range(k):
            acc = acc + mass[:, j, None] * (box[:, j] / safe_area[:, j, None])
        out[start:start + len(part)] = acc / (area * std[None, :])
    return out


# --- feature bank ---------------------------------------------------------

def edge_feature(x, y, w, h, vertical: bool, base=(24, 24)) -> HaarFeature:
    """Two-rect edge: first half +1, second half -1."""
    if vertical:
        return HaarFeature(((x, y, w, h, 1), (x, y + h, w, h, -1)), base, "edge-v")
    return HaarFeature(((x, y, w, h, 1), (x + w, y, w, h, -1)), base, "edge-h")


def line_feature(x, y, w, h, vertical: bool, base=(24, 24)) -> HaarFeature:
    """Three-rect line: whole span +1, middle third -3."""
    if vertical:
        return HaarFeature(((x, y, w, 3 * h, 1), (x, y + h, w, h, -3)), base, "line-v")
    return HaarFeature(((x, y, 3 * w, h, 1), (x + w, y, w, h, -3)), base, "line-h")


def boundary_feature(x, y, w, h, vertical: bool, base=(24, 24)) -> HaarFeature:
    """The ``x - 2y`` boundary check: outer box ``x`` minus twice its middle half ``y``."""
    if vertical:
        return HaarFeature(((x, y, w, 4 * h, 1), (x, y + h, w, 2 * h, -2)), base, "xy-v")
    return HaarFeature(((x, y, 4 * w, h, 1), (x + w, y, 2 * w, h, -2)), base, "xy-h")


def default_bank(base=(24, 24), step: int = 2) -> list[HaarFeature]:
    """Axis-aligned edge, line and ``x - 2y`` features on a ``step`` grid."""
    bw, bh = base
    bank = []
    for make, parts in ((edge_feature, 2), (line_feature, 3), (boundary_feature, 4)):
        for vertical in (False, True):
            span_w, span_h = (1, parts) if vertical else (parts, 1)
            for u in range(step, bw + 1, step):          # unit width
                for v in range(step, bh + 1, step):      # unit height
                    if u * span_w > bw or v * span_h > bh:
                        continue
                    for y in range(0, bh - v * span_h + 1, step):
                        for x in range(0, bw - u * span_w + 1, step):
                            bank.append(make(x, y, u, v, vertical, base))
    return bank
