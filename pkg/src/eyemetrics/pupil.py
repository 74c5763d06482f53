"""Pupil center/radius estimation and the eye-image -> pupil pipeline."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from . import threshold as th
from .imagecore import BinaryImage, GrayImage, compute_histogram, invert
from .morph import MorphParams, StructuringElement, pupil_filter


class NoPupilError(ValueError):
    pass


@dataclass(frozen=True)
class PupilEstimate:
    x0: int          # column of the fullest column
    y0: int          # row of the fullest row
    r: float
    num_pix: int
    confidence: float
    diagnostics: dict = field(default_factory=dict, compare=False, hash=False)

    def to_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "r": self.r,
                "num_pix": self.num_pix, "confidence": self.confidence}


@dataclass(frozen=True)
class PupilConfig:
    bt: float = th.DEFAULT_BT
    significance: float = th.DEFAULT_SIGNIFICANCE
    fallback_percentile: float = th.DEFAULT_FALLBACK_PERCENTILE
    n1: int = MorphParams.n1
    n2: int = MorphParams.n2
    se: Optional[StructuringElement] = None
    largest_component: bool = False

    @property
    def morph(self) -> MorphParams:
        return MorphParams(self.n1, self.n2)


def radius_from_count(num_pix: int) -> float:
    return math.sqrt(num_pix / math.pi)


def _fullest(counts: np.ndarray) -> int:
    best = np.flatnonzero(counts == counts.max())
    return int(best[0] + best[-1]) // 2


def locate_pupil(f: BinaryImage) -> PupilEstimate:
    """Center from the fullest row and column, radius from the pixel count.

    The two longest chords of a disk cross at its center. A rasterized disk
    has several equally full rows near its middle, so ties resolve to the
    middle of the tied indices (lower one when the middle falls between two).
    """
    px = f.pixels
    num_pix = int(px.sum())
    if num_pix == 0:
        raise NoPupilError("no pupil region")
    y0 = _fullest(px.sum(axis=1))
    x0 = _fullest(px.sum(axis=0))
    r = radius_from_count(num_pix)
    ys, xs = np.nonzero(px)
    inside = int(np.count_nonzero((xs - x0) ** 2 + (ys - y0) ** 2 <= r * r))
    return PupilEstimate(x0=x0, y0=y0, r=r, num_pix=num_pix, confidence=inside / num_pix)


def largest_component(f: BinaryImage) -> BinaryImage:
    labels, n = ndimage.label(f.pixels)
    if n <= 1:
        return f
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return BinaryImage(labels == int(np.argmax(sizes)))


def segment_pupil(eye: GrayImage, cfg: PupilConfig = PupilConfig()):
    """Threshold and clean an eye image; returns ``(mask, ThresholdResult)``."""
    hist = compute_histogram(eye)
    sh = th.smooth(hist, th.build_kernel(cfg.bt))
    tr = th.select_threshold(sh, cfg.significance, cfg.fallback_percentile)
    dark = th.binarize(eye, tr.threshold)
    # Thresholded picture as displayed: pupil black, surroundings white.
    picture = invert(dark)
    mask = pupil_filter(picture, cfg.se, cfg.morph)
    if cfg.largest_component:
        mask = largest_component(mask)
    return mask, tr


def detect_pupil(eye: GrayImage, cfg: PupilConfig = PupilConfig()) -> PupilEstimate:
    if eye.size == 0:
        raise ValueError("empty eye image")
    mask, tr = segment_pupil(eye, cfg)
    est = locate_pupil(mask)
    est.diagnostics.update(threshold=tr.threshold, method=tr.method,
                           num_pix=est.num_pix, confidence=est.confidence)
    return est


def _detect_or_gap(eye, cfg):
    try:
        return detect_pupil(eye, cfg)
    except (NoPupilError, th.ThresholdError):
        return None


def pupil_series(frames: Sequence[GrayImage], cfg: PupilConfig = PupilConfig(),
                 workers: int = 1) -> list[Optional[PupilEstimate]]:
    """Per-frame estimates; frames where detection fails hold ``None``."""
    frames = list(frames)
    if not frames:
        raise ValueError("pupil_series needs at least one frame")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda im: _detect_or_gap(im, cfg), frames))
    return [_detect_or_gap(im, cfg) for im in frames]
