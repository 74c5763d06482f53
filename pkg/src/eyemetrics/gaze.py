"""Gaze direction, corner-referenced pupil features, screen calibration, tension.

Under constant light there is no corneal glint to use as a reference, so the
eye corner stands in for it: with the head at rest its absolute position
does not change while the pupil moves.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

DEFAULT_TENSION_SATURATION = 0.2


@dataclass(frozen=True)
class Surface:
    name: str
    location: float  # mm from the corneal apex
    radius: float    # mm, signed
    refractive_index: Optional[float]  # of the medium behind the surface


@dataclass(frozen=True)
class GullstrandEyeModel:
    """Schematic eye surfaces (reference data only; nothing is ray traced)."""

    surfaces: tuple = (
        Surface("cornea", 0.0, 7.7, 1.376),
        Surface("cornea", 0.5, 6.8, 1.336),
        Surface("lens", 3.2, 5.33, 1.385),
        Surface("lens", 3.8, 2.65, 1.406),
        Surface("lens", 6.6, -2.65, 1.385),
        Surface("lens", 7.2, -5.33, 1.336),
        Surface("retina", 24.0, -11.5, None),
    )

    def __post_init__(self):
        locs = [s.location for s in self.surfaces]
        if any(b <= a for a, b in zip(locs, locs[1:])):
            raise ValueError("surface locations must increase strictly")

    @property
    def axial_length(self) -> float:
        return self.surfaces[-1].location


class DegenerateGazeError(ValueError):
    pass


class DegenerateCalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class GazeVector:
    e: tuple
    r_p: float  # distance from eye center to pupil center, mm

    def __iter__(self):
        return iter(self.e)


def gaze_direction(p, c) -> GazeVector:
    """Unit line of sight from eye center ``c`` through pupil center ``p``."""
    p = np.asarray(p, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    d = p - c
    r_p = float(np.linalg.norm(d))
    if r_p == 0.0:
        raise DegenerateGazeError("degenerate gaze: pupil and eye center coincide")
    return GazeVector(tuple(float(v) for v in d / r_p), r_p)


@dataclass(frozen=True)
class CornerFeature:
    dx: float
    dy: float

    def __post_init__(self):
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise ValueError("corner feature must be finite")


def corner_feature(pupil, corner) -> CornerFeature:
    """Pupil center minus eye corner, both in the same frame's pixels.

    ``pupil`` is anything with ``x0``/``y0`` or an ``(x, y)`` pair.
    """
    if hasattr(pupil, "x0"):
        px, py = pupil.x0, pupil.y0
    else:
        px, py = pupil
    return CornerFeature(float(px) - float(corner[0]), float(py) - float(corner[1]))


def poly_terms(dx, dy, degree: int) -> np.ndarray:
    """Design row(s): 1, dx, dy for degree 1; plus dx^2, dx*dy, dy^2 for degree 2."""
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    cols = [np.ones_like(dx), dx, dy]
    if degree == 2:
        cols += [dx * dx, dx * dy, dy * dy]
    elif degree != 1:
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    return np.stack(cols, axis=-1)


def n_coeffs(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


@dataclass(frozen=True)
class ScreenPoint:
    x: float
    y: float
    off_screen: bool = False


@dataclass(frozen=True)
class CalibrationMap:
    degree: int
    coeffs_x: tuple
    coeffs_y: tuple
    residual: float
    bounds: tuple  # (xmin, ymin, xmax, ymax) of the screen
    samples: tuple = field(default=(), compare=False)

    def __post_init__(self):
        k = n_coeffs(self.degree)
        if len(self.coeffs_x) != k or len(self.coeffs_y) != k:
            raise ValueError(f"degree {self.degree} needs {k} coefficients per axis")

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "coeffs_x": list(self.coeffs_x),
            "coeffs_y": list(self.coeffs_y),
            "residual": self.residual,
            "bounds": list(self.bounds),
            "samples": [{"feature": [f.dx, f.dy], "screen": list(s)} for f, s in self.samples],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationMap":
        samples = tuple((CornerFeature(*s["feature"]), tuple(s["screen"]))
                        for s in doc.get("samples", []))
        return cls(int(doc["degree"]), tuple(doc["coeffs_x"]), tuple(doc["coeffs_y"]),
                   float(doc["residual"]), tuple(doc["bounds"]), samples)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "CalibrationMap":
        return cls.from_dict(json.loads(Path(path).read_text()))


def calibrate(samples: Sequence, degree: int = 2, screen: Optional[tuple] = None) -> CalibrationMap:
    """Least-squares polynomial map from corner features to screen points.

    ``samples`` holds ``(CornerFeature, (sx, sy))`` pairs; several per
    target are fine. ``screen`` is ``(width, height)``; without it the screen
    is taken as the targets' bounding box. A 3x3 target grid is the usual
    protocol for degree 2.
    """
    k = n_coeffs(degree)
    samples = [(f if isinstance(f, CornerFeature) else CornerFeature(*f), tuple(s))
               for f, s in samples]
    if len(samples) < k:
        raise DegenerateCalibrationError(f"degree {degree} needs >= {k} samples, got {len(samples)}")
    feats = np.array([[f.dx, f.dy] for f, _ in samples])
    targets = np.array([s for _, s in samples], dtype=np.float64)
    a = poly_terms(feats[:, 0], feats[:, 1], degree)
    # Column scaling keeps the rank test meaningful for pixel-sized features.
    norms = np.linalg.norm(a, axis=0)
    norms[norms == 0] = 1.0
    if np.linalg.matrix_rank(a / norms) < k:
        raise DegenerateCalibrationError("degenerate calibration: samples do not span the model")
    sol, *_ = np.linalg.lstsq(a / norms, targets, rcond=None)
    sol = sol / norms[:, None]
    fitted = a @ sol
    residual = float(np.sqrt(np.mean(np.sum((fitted - targets) ** 2, axis=1))))
    if screen is None:
        bounds = (float(targets[:, 0].min()), float(targets[:, 1].min()),
                  float(targets[:, 0].max()), float(targets[:, 1].max()))
    else:
        bounds = (0.0, 0.0, float(screen[0]), float(screen[1]))
    return CalibrationMap(degree, tuple(float(v) for v in sol[:, 0]),
                          tuple(float(v) for v in sol[:, 1]), residual, bounds, tuple(samples))


def map_to_screen(m: CalibrationMap, f) -> ScreenPoint:
    """Evaluate the map; points outside the screen bounds are flagged, not clamped."""
    if not isinstance(f, CornerFeature):
        f = CornerFeature(*f)
    row = poly_terms(f.dx, f.dy, m.degree)
    x = float(row @ np.asarray(m.coeffs_x))
    y = float(row @ np.asarray(m.coeffs_y))
    xmin, ymin, xmax, ymax = m.bounds
    return ScreenPoint(x, y, not (xmin <= x <= xmax and ymin <= y <= ymax))


@dataclass(frozen=True)
class TensionReport:
    baseline_r: float
    stimulus_r: float
    dilation_ratio: float
    score: float
    baseline_frames: int = 0
    stimulus_frames: int = 0

    def to_dict(self):
        return {"baseline_r": self.baseline_r, "stimulus_r": self.stimulus_r,
                "dilation_ratio": self.dilation_ratio, "score": self.score,
                "baseline_frames": self.baseline_frames,
                "stimulus_frames": self.stimulus_frames}


def _radius(item):
    if item is None:
        return None
    return float(item.r) if hasattr(item, "r") else float(item)


def _window_mean(radii, window, name):
    start, stop = window
    if not 0 <= start < stop <= len(radii):
        raise ValueError(f"{name} window {window} outside series of length {len(radii)}")
    vals = [r for r in radii[start:stop] if r is not None]
    if not vals:
        raise ValueError(f"{name} window {window} holds no valid frames")
    return sum(vals) / len(vals), len(vals)


def tension_score(series: Sequence, baseline: tuple, stimulus: tuple,
                  saturation: float = DEFAULT_TENSION_SATURATION) -> TensionReport:
    """Relative pupil dilation of a stimulus window over a baseline window.

    Windows are half-open ``(start, stop)`` frame ranges; ``None`` entries
    (failed frames) are skipped. The score rises linearly from 0 at no
    dilation to 1 at ``saturation`` relative dilation.
    """
    if saturation <= 0:
        raise ValueError("saturation must be positive")
    b0, b1 = baseline
    s0, s1 = stimulus
    if max(b0, s0) < min(b1, s1):
        raise ValueError("baseline and stimulus windows overlap")
    radii = [_radius(x) for x in series]
    base, nb = _window_mean(radii, baseline, "baseline")
    stim, ns = _window_mean(radii, stimulus, "stimulus")
    if base <= 0:
        raise ValueError("baseline mean radius must be positive")
    ratio = stim / base
    # (stim - base) / (saturation * base) keeps round numbers exact.
    score = min(max((stim - base) / (saturation * base), 0.0), 1.0)
    return TensionReport(base, stim, ratio, score, nb, ns)
