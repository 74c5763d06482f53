"""Histogram smoothing and automatic threshold selection for eye images.

The gray histogram of an eye crop is roughly trimodal (pupil < iris < sclera).
It is smoothed with a sampled Gaussian whose width comes from a bandwidth-time
product ``bt``; the threshold is the deepest valley between the darkest mode
and the one after it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imagecore import BinaryImage, GrayImage, Histogram

DEFAULT_BT = 0.05
DEFAULT_SIGNIFICANCE = 0.05
DEFAULT_FALLBACK_PERCENTILE = 0.15

# Fraction of the untruncated kernel mass the finite taps must keep.
KERNEL_MASS = 0.999


class ThresholdError(ValueError):
    """Raised when a histogram has no segmentable structure."""


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    bt: float
    delta: float
    raw_taps: np.ndarray  # h(t) as evaluated, t = -T..T
    taps: np.ndarray      # raw_taps normalized to unit sum

    @property
    def half_width(self) -> int:
        return (len(self.taps) - 1) // 2

    @property
    def offsets(self) -> np.ndarray:
        t = self.half_width
        return np.arange(-t, t + 1)


@dataclass(frozen=True, eq=False)
class SmoothedHistogram:
    values: np.ndarray
    source_total: float
    source_levels: int  # occupied bins in the unsmoothed histogram


@dataclass(frozen=True)
class ThresholdResult:
    threshold: int
    peak_low: int
    peak_high: int
    method: str  # "valley" or "fallback"


def gaussian_delta(bt: float) -> float:
    return math.sqrt(math.log(2.0)) / (2.0 * math.pi * bt)


def _gauss(t, delta):
    t = np.asarray(t, dtype=np.float64)
    return np.exp(-t * t / (2.0 * delta * delta)) / (math.sqrt(2.0 * math.pi) * delta)


def build_kernel(bt: float = DEFAULT_BT) -> GaussianKernel:
    """Sample ``h(t) = exp(-t^2 / 2 delta^2) / (sqrt(2 pi) delta)`` at integer t.

    The half width T is the smallest one whose taps hold at least 99.9% of
    the mass of the untruncated sampled series.
    """
    if not bt > 0:
        raise ValueError(f"bt must be positive, got {bt}")
    delta = gaussian_delta(bt)
    far = int(math.ceil(12.0 * delta)) + 2
    full = _gauss(np.arange(-far, far + 1), delta)
    total = full.sum()
    centre = far
    running = full[centre]
    half = 0
    while running < KERNEL_MASS * total:
        half += 1
        running += full[centre - half] + full[centre + half]
    raw = _gauss(np.arange(-half, half + 1), delta)
    raw.setflags(write=False)
    taps = raw / raw.sum()
    taps.setflags(write=False)
    return GaussianKernel(bt=bt, delta=delta, raw_taps=raw, taps=taps)


def smooth(h: Histogram | np.ndarray, k: GaussianKernel) -> SmoothedHistogram:
    """Convolve the 256 bins with the kernel, reflecting at both ends.

    Half-sample reflection folds the mass that would spill past 0 or 255
    back into range, so the total is preserved up to rounding.
    """
    bins = np.asarray(h.bins if isinstance(h, Histogram) else h, dtype=np.float64)
    if bins.shape != (256,):
        raise ValueError("expected 256 histogram bins")
    half = k.half_width
    if half >= 256:
        raise ValueError("kernel wider than the histogram")
    padded = np.pad(bins, half, mode="symmetric")
    values = np.convolve(padded, k.taps, mode="valid")
    np.maximum(values, 0.0, out=values)
    values.setflags(write=False)
    return SmoothedHistogram(values=values, source_total=float(bins.sum()),
                             source_levels=int(np.count_nonzero(bins)))


def _quantize(values: np.ndarray) -> np.ndarray:
    # Integer view of the shape, so mass scaling cannot flip float ties.
    top = values.max()
    return np.rint(values / top * 1e9).astype(np.int64)


def find_peaks(values: np.ndarray) -> list[int]:
    """Local maxima of a 1-D profile; a flat top reports its middle index."""
    q = _quantize(np.asarray(values, dtype=np.float64))
    n = len(q)
    peaks = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and q[j + 1] == q[i]:
            j += 1
        left_lower = i == 0 or q[i - 1] < q[i]
        right_lower = j == n - 1 or q[j + 1] < q[i]
        if left_lower and right_lower and q[i] > 0:
            peaks.append((i + j) // 2)
        i = j + 1
    return peaks


def select_threshold(sh: SmoothedHistogram,
                     significance: float = DEFAULT_SIGNIFICANCE,
                     fallback_percentile: float = DEFAULT_FALLBACK_PERCENTILE) -> ThresholdResult:
    values = np.asarray(sh.values, dtype=np.float64)
    if sh.source_levels < 2 or values.max() <= 0 or np.all(values == values[0]):
        raise ThresholdError("histogram is constant; nothing to segment")
    q = _quantize(values)
    top = q.max()
    peaks = [p for p in find_peaks(values) if q[p] >= significance * top]

    if len(peaks) >= 2:
        lo, hi = peaks[0], peaks[1]
        between = q[lo + 1:hi]
        if between.size and between.min() < min(q[lo], q[hi]):
            floor = between.min()
            first = int(np.argmax(between == floor))
            last = first
            while last + 1 < between.size and between[last + 1] == floor:
                last += 1
            return ThresholdResult(threshold=lo + 1 + (first + last) // 2,
                                   peak_low=lo, peak_high=hi, method="valley")

    cdf = np.cumsum(values)
    level = int(np.searchsorted(cdf, fallback_percentile * cdf[-1], side="left"))
    main = peaks[0] if peaks else int(np.argmax(q))
    return ThresholdResult(threshold=min(level, 255), peak_low=main, peak_high=main,
                           method="fallback")


def binarize(img: GrayImage, threshold: int) -> BinaryImage:
    """Dark pixels (``<= threshold``) become foreground."""
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold {threshold} outside 0..255")
    return BinaryImage(img.pixels <= threshold)
