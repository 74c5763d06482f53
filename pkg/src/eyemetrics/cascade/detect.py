"""Multi-scale sliding-window scanning, hit merging, face-then-eyes search."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..imagecore import GrayImage, IntegralImage, Rect, compute_integral, crop
from .features import _round, eval_feature_windows, windows_std
from .model import Cascade, Detection

DEFAULT_SCALE_FACTOR = 1.25
DEFAULT_STEP = 0.1
MERGE_IOU = 0.4
MIN_HITS = 2
EYE_BAND = 0.6


def window_sizes(c: Cascade, width: int, height: int, scale_factor: float,
                 max_levels: Optional[int] = None):
    """``(scale, w, h)`` for every pyramid level whose window fits the image."""
    bw, bh = c.window
    k = 0
    while max_levels is None or k < max_levels:
        scale = scale_factor ** k
        ww, wh = _round(bw * scale), _round(bh * scale)
        if ww > width or wh > height:
            break
        yield scale, ww, wh
        k += 1


def _scan_level(c: Cascade, ii: IntegralImage, scale: float, ww: int, wh: int, stride: int):
    ys, xs = np.mgrid[0:ii.height - wh + 1:stride, 0:ii.width - ww + 1:stride]
    xs, ys = xs.ravel(), ys.ravel()
    std = windows_std(ii, xs, ys, ww, wh)
    alive = np.arange(len(xs))
    for st in c.stages:
        if alive.size == 0:
            break
        ax, ay, astd = xs[alive], ys[alive], std[alive]
        total = np.zeros(alive.size)
        for m, w in zip(st.members, st.weights):
            v = eval_feature_windows(ii, m.feature, ax, ay, scale, astd)
            f = np.where(m.polarity * v >= m.polarity * m.t, 1.0, -1.0)
            total = total + w * f
        alive = alive[total > st.stage_threshold]
    n = len(c.stages)
    return [Detection(Rect(int(xs[i]), int(ys[i]), ww, wh), scale, n) for i in alive]


def scan_raw(c: Cascade, img: GrayImage, scale_factor: float = DEFAULT_SCALE_FACTOR,
             step: float = DEFAULT_STEP, max_levels: Optional[int] = None,
             ii: Optional[IntegralImage] = None) -> list[Detection]:
    """Every accepted window, ordered by (scale, y, x)."""
    if scale_factor < 1.05:
        raise ValueError(f"scale factor must be >= 1.05, got {scale_factor}")
    if step <= 0:
        raise ValueError("step fraction must be positive")
    bw, bh = c.window
    if img.width < bw or img.height < bh:
        return []
    ii = ii or compute_integral(img)
    hits = []
    for scale, ww, wh in window_sizes(c, img.width, img.height, scale_factor, max_levels):
        stride = max(1, _round(step * ww))
        hits.extend(_scan_level(c, ii, scale, ww, wh, stride))
    return hits


def merge_detections(hits, iou: float = MERGE_IOU, min_hits: int = MIN_HITS) -> list[Detection]:
    """Group hits linked by IoU > ``iou`` and average each group's rect.

    Groups with fewer than ``min_hits`` members are dropped. Output is sorted
    by hit count (descending), then position.
    """
    n = len(hits)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if hits[i].rect.iou(hits[j].rect) > iou:
                a, b = find(i), find(j)
                if a != b:
                    parent[max(a, b)] = min(a, b)
    groups: dict[int, list[Detection]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(hits[i])

    merged = []
    for members in groups.values():
        if len(members) < min_hits:
            continue
        box = np.array([d.rect.as_tuple() for d in members], dtype=np.float64).mean(axis=0)
        x, y, w, h = (_round(v) for v in box)
        merged.append(Detection(Rect(x, y, max(1, w), max(1, h)),
                                float(np.mean([d.scale for d in members])),
                                members[0].stages_passed, True, len(members)))
    merged.sort(key=lambda d: (-d.hits, d.rect.y, d.rect.x))
    return merged


def scan(c: Cascade, img: GrayImage, scale_factor: float = DEFAULT_SCALE_FACTOR,
         step: float = DEFAULT_STEP, max_levels: Optional[int] = None,
         iou: float = MERGE_IOU, min_hits: int = MIN_HITS) -> list[Detection]:
    return merge_detections(scan_raw(c, img, scale_factor, step, max_levels), iou, min_hits)


@dataclass
class FaceEyes:
    face: Optional[Rect]
    eyes: list = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.face is not None


def detect_face_then_eyes(img: GrayImage, face_cascade: Cascade, eye_cascade: Cascade,
                          scale_factor: float = DEFAULT_SCALE_FACTOR,
                          step: float = DEFAULT_STEP) -> FaceEyes:
    """Find the largest face, then up to two eyes in its upper band.

    Eyes come back leftmost first, in image coordinates.
    """
    faces = scan(face_cascade, img, scale_factor, step)
    if not faces:
        return FaceEyes(None, [])
    face = max(faces, key=lambda d: (d.rect.area, d.hits, -d.rect.y, -d.rect.x)).rect
    fx, fy = max(face.x, 0), max(face.y, 0)
    fw = min(face.x + face.w, img.width) - fx
    fh = min(face.y + max(1, _round(EYE_BAND * face.h)), img.height) - fy
    if fw < 1 or fh < 1:
        return FaceEyes(face, [])
    band = Rect(fx, fy, fw, fh)
    eyes = scan(eye_cascade, crop(img, band), scale_factor, step)
    if not eyes:
        return FaceEyes(face, [])
    eyes = sorted(eyes, key=lambda d: (d.rect.x + d.rect.w / 2.0, d.rect.y))
    picked = [eyes[0]] if len(eyes) == 1 else [eyes[0], eyes[-1]]
    return FaceEyes(face, [d.rect.offset(band.x, band.y) for d in picked])
