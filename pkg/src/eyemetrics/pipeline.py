"""End-to-end runs: frames in, JSON-lines report (and overlays) out."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, synth
from .builtin import builtin_name, load_builtin
from .cascade import Cascade, detect_face_then_eyes
from .cascade.detect import DEFAULT_SCALE_FACTOR, DEFAULT_STEP
from .gaze import (DEFAULT_TENSION_SATURATION, CalibrationMap, TensionReport, corner_feature,
                   map_to_screen, tension_score)
from .imagecore import GrayImage, Rect, crop
from .io import read_image, write_image
from .morph import MorphParams, StructuringElement
from .pupil import NoPupilError, PupilConfig, PupilEstimate, detect_pupil
from .threshold import (DEFAULT_BT, DEFAULT_FALLBACK_PERCENTILE, DEFAULT_SIGNIFICANCE,
                        ThresholdError)

# Overlay gray levels.
INK_RECT = 255
INK_PUPIL = 128
INK_GAZE = 0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    bt: float = DEFAULT_BT
    significance: float = DEFAULT_SIGNIFICANCE
    fallback_percentile: float = DEFAULT_FALLBACK_PERCENTILE
    n1: int = MorphParams.n1
    n2: int = MorphParams.n2
    se_path: Optional[str] = None
    largest_component: bool = False
    scale_factor: float = DEFAULT_SCALE_FACTOR
    stride_fraction: float = DEFAULT_STEP
    tension_saturation: float = DEFAULT_TENSION_SATURATION
    calibration_path: Optional[str] = None
    face_cascade_path: Optional[str] = None   # None: the shipped synthetic cascade
    eye_cascade_path: Optional[str] = None
    corner: Optional[tuple] = None            # (x, y) in frame pixels
    eye_region: Optional[tuple] = None        # (x, y, w, h); skips the cascades
    overlay_dir: Optional[str] = None
    workers: int = 1

    def validate(self) -> None:
        if not (self.bt > 0 and math.isfinite(self.bt)):
            raise ConfigError("bt must be a positive number")
        if not 0 < self.significance <= 1:
            raise ConfigError("significance must be in (0, 1]")
        if not 0 < self.fallback_percentile < 1:
            raise ConfigError("fallback percentile must be in (0, 1)")
        if not 0 <= self.n1 <= self.n2:
            raise ConfigError("need 0 <= n1 <= n2")
        if self.scale_factor < 1.05:
            raise ConfigError("scale factor must be >= 1.05")
        if not self.stride_fraction > 0:
            raise ConfigError("stride fraction must be positive")
        if not self.tension_saturation > 0:
            raise ConfigError("tension saturation must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.eye_region is not None:
            if len(self.eye_region) != 4 or min(self.eye_region[2:]) < 1 or min(self.eye_region[:2]) < 0:
                raise ConfigError("eye region must be x,y,w,h with x,y >= 0 and w,h >= 1")
        if self.corner is not None and len(self.corner) != 2:
            raise ConfigError("corner must be x,y")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("corner", "eye_region"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @property
    def pupil(self) -> PupilConfig:
        se = StructuringElement.load(self.se_path) if self.se_path else None
        return PupilConfig(self.bt, self.significance, self.fallback_percentile,
                           self.n1, self.n2, se, self.largest_component)


@dataclass
class FrameReport:
    frame_index: int
    source: str
    face: Optional[Rect] = None
    eyes: list = field(default_factory=list)
    pupils: list = field(default_factory=list)   # PupilEstimate or None, one per eye
    gaze: Optional[dict] = None
    diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "type": "frame",
            "frame_index": self.frame_index,
            "source": self.source,
            "face": None if self.face is None else list(self.face.as_tuple()),
            "eyes": [list(e.as_tuple()) for e in self.eyes],
            "pupils": [None if p is None else p.to_dict() for p in self.pupils],
            "gaze": self.gaze,
            "diagnostics": self.diagnostics,
        }


def dump_line(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class _Resources:
    cfg: RunConfig
    pupil: PupilConfig
    face: Optional[Cascade] = None
    eye: Optional[Cascade] = None
    calibration: Optional[CalibrationMap] = None


def _load_cascade(path, kind):
    return load_builtin(kind) if path is None else Cascade.load(path)


def prepare(cfg: RunConfig) -> _Resources:
    """Validate ``cfg`` and load everything it points at, before any frame."""
    cfg.validate()
    try:
        res = _Resources(cfg, cfg.pupil)
        if cfg.eye_region is None:
            res.face = _load_cascade(cfg.face_cascade_path, "face")
            res.eye = _load_cascade(cfg.eye_cascade_path, "eye")
        if cfg.calibration_path is not None:
            res.calibration = CalibrationMap.load(cfg.calibration_path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return res


def header(cfg: RunConfig) -> dict:
    cfg_doc = cfg.to_dict()
    if cfg.eye_region is None:
        cfg_doc["face_cascade_path"] = cfg.face_cascade_path or builtin_name("face")
        cfg_doc["eye_cascade_path"] = cfg.eye_cascade_path or builtin_name("eye")
    return {"type": "header", "tool": "eyemetrics", "version": __version__, "config": cfg_doc}


def process_frame(res: _Resources, index: int, img: GrayImage, source: str = "") -> FrameReport:
    cfg = res.cfg
    rep = FrameReport(index, source)
    if cfg.eye_region is not None:
        eye = Rect(*cfg.eye_region)
        if not eye.inside(img.width, img.height):
            raise ValueError(f"eye region {eye.as_tuple()} outside {img.width}x{img.height} frame")
        rep.eyes = [eye]
    else:
        fe = detect_face_then_eyes(img, res.face, res.eye, cfg.scale_factor, cfg.stride_fraction)
        rep.face, rep.eyes = fe.face, list(fe.eyes)
    for eye in rep.eyes:
        try:
            est = detect_pupil(crop(img, eye), res.pupil)
        except (NoPupilError, ThresholdError) as exc:
            rep.pupils.append(None)
            rep.diagnostics.append({"error": str(exc)})
            continue
        # Back to frame coordinates.
        est = PupilEstimate(est.x0 + eye.x, est.y0 + eye.y, est.r, est.num_pix, est.confidence,
                            dict(est.diagnostics))
        rep.pupils.append(est)
        rep.diagnostics.append({"threshold": est.diagnostics["threshold"],
                                "method": est.diagnostics["method"],
                                "num_pix": est.num_pix, "confidence": est.confidence})
    if res.calibration is not None and cfg.corner is not None:
        first = next((p for p in rep.pupils if p is not None), None)
        if first is not None:
            pt = map_to_screen(res.calibration, corner_feature(first, cfg.corner))
            rep.gaze = {"x": pt.x, "y": pt.y, "off_screen": pt.off_screen}
    return rep


def _plot(px, xs, ys, ink):
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    ok = (xs >= 0) & (xs < px.shape[1]) & (ys >= 0) & (ys < px.shape[0])
    px[ys[ok], xs[ok]] = ink


def draw_overlay(img: GrayImage, rep: FrameReport, bounds=None) -> GrayImage:
    """Face/eye rects in white, pupil circles in mid gray, gaze point in black."""
    px = img.pixels.copy()
    for r in ([rep.face] if rep.face is not None else []) + list(rep.eyes):
        xs = np.arange(r.x, r.x + r.w)
        ys = np.arange(r.y, r.y + r.h)
        _plot(px, xs, np.full_like(xs, r.y), INK_RECT)
        _plot(px, xs, np.full_like(xs, r.y + r.h - 1), INK_RECT)
        _plot(px, np.full_like(ys, r.x), ys, INK_RECT)
        _plot(px, np.full_like(ys, r.x + r.w - 1), ys, INK_RECT)
    for p in rep.pupils:
        if p is None:
            continue
        t = np.linspace(0, 2 * np.pi, max(16, int(8 * p.r)), endpoint=False)
        _plot(px, np.rint(p.x0 + p.r * np.cos(t)), np.rint(p.y0 + p.r * np.sin(t)), INK_PUPIL)
        _plot(px, [p.x0], [p.y0], INK_PUPIL)
    if rep.gaze is not None and bounds is not None:
        xmin, ymin, xmax, ymax = bounds
        gx = (rep.gaze["x"] - xmin) / max(xmax - xmin, 1e-9) * (img.width - 1)
        gy = (rep.gaze["y"] - ymin) / max(ymax - ymin, 1e-9) * (img.height - 1)
        d = np.arange(-3, 4)
        cx, cy = int(round(gx)), int(round(gy))
        _plot(px, cx + d, np.full_like(d, cy), INK_GAZE)
        _plot(px, np.full_like(d, cx), cy + d, INK_GAZE)
    return GrayImage(px)


def _run_one(res: _Resources, index: int, path: Path):
    try:
        img = read_image(path)
        rep = process_frame(res, index, img, path.name)
    except Exception as exc:  # one bad frame must not stop the run
        return {"type": "error", "frame_index": index, "source": path.name,
                "error": f"{type(exc).__name__}: {exc}"}, None, None
    return rep.to_dict(), rep, img


def run_pipeline(inputs: Sequence, cfg: RunConfig, out=None) -> tuple[list[str], int]:
    """Process ``inputs`` in order; returns the report lines and the failure count.

    Lines are written to ``out`` (a text stream) as well when given. Config
    problems raise :class:`ConfigError` before any frame is read.
    """
    paths = [Path(p) for p in inputs]
    if not paths:
        raise ConfigError("no input frames")
    res = prepare(cfg)
    if cfg.overlay_dir is not None:
        Path(cfg.overlay_dir).mkdir(parents=True, exist_ok=True)
    lines = [dump_line(header(cfg))]
    if out is not None:
        out.write(lines[0] + "\n")
    bounds = res.calibration.bounds if res.calibration is not None else None

    def work(item):
        i, p = item
        doc, rep, img = _run_one(res, i, p)
        if rep is not None and cfg.overlay_dir is not None:
            write_image(Path(cfg.overlay_dir) / f"overlay_{i:05d}.pgm", draw_overlay(img, rep, bounds))
        return doc

    items = list(enumerate(paths))
    failures = 0
    # map() yields in submission order, so lines stay in frame order.
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            docs = pool.map(work, items)
            docs = list(docs)
    else:
        docs = [work(it) for it in items]
    for doc in docs:
        failures += doc["type"] == "error"
        line = dump_line(doc)
        lines.append(line)
        if out is not None:
            out.write(line + "\n")
    return lines, failures


def read_report(path_or_lines) -> tuple[dict, list[dict]]:
    """Header and records of a JSON-lines report (path or iterable of lines)."""
    if isinstance(path_or_lines, (str, Path)):
        lines = Path(path_or_lines).read_text().splitlines()
    else:
        lines = list(path_or_lines)
    docs = [json.loads(ln) for ln in lines if ln.strip()]
    if not docs or docs[0].get("type") != "header":
        raise ValueError("report has no header line")
    return docs[0], docs[1:]


def radius_series(records: list[dict], eye: int = 0) -> list[Optional[float]]:
    """Pupil radius per frame index; ``None`` for failed or missing frames."""
    if not records:
        return []
    n = max(r["frame_index"] for r in records) + 1
    out: list[Optional[float]] = [None] * n
    for r in records:
        if r.get("type") != "frame":
            continue
        pupils = r.get("pupils", [])
        if eye < len(pupils) and pupils[eye] is not None:
            out[r["frame_index"]] = float(pupils[eye]["r"])
    return out


def run_tension(report, baseline: tuple, stimulus: tuple,
                saturation: Optional[float] = None, eye: int = 0) -> TensionReport:
    """Tension score from the radii in a report; saturation defaults to the run's."""
    head, records = read_report(report)
    if saturation is None:
        saturation = head["config"].get("tension_saturation", DEFAULT_TENSION_SATURATION)
    return tension_score(radius_series(records, eye), baseline, stimulus, saturation)


def generate_synthetic(out_dir, count: int, seed: int = 0, radius=12.0, radius_end=None,
                       noise: float = 5.0, center=None, gaze=None,
                       corrupt: Sequence[int] = ()) -> dict:
    """Write ``count`` eye frames plus ``manifest.json`` into ``out_dir``.

    The radius ramps linearly from ``radius`` to ``radius_end`` when given.
    The eye opening is placed once per sequence (at ``center`` if given) and
    sized for the largest pupil, so the eye rect and corner stay fixed.
    ``gaze`` lists per-frame (gx, gy) offsets in [-1, 1]; without it the
    pupil sits at the eye center. Frames listed in ``corrupt`` are written
    as truncated, unreadable files.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if gaze is not None and len(gaze) != count:
        raise ValueError("need one gaze offset per frame")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    radii = (np.full(count, float(radius)) if radius_end is None
             else np.linspace(float(radius), float(radius_end), count))
    iris_r = 2.2 * float(radii.max())
    rng = np.random.default_rng(seed)
    if center is None:
        a, b = 2.4 * iris_r, 1.25 * iris_r
        if 2 * a + 4 > synth.FRAME_W or 2 * b + 4 > synth.FRAME_H:
            raise ValueError("radius too large for the frame")
        center = (float(rng.uniform(a + 2, synth.FRAME_W - a - 2)),
                  float(rng.uniform(b + 2, synth.FRAME_H - b - 2)))
    bad = set(corrupt)
    frames = []
    for i in range(count):
        g = (0.0, 0.0) if gaze is None else tuple(float(v) for v in gaze[i])
        img, truth = synth.synth_eye_frame(float(radii[i]), seed=rng, noise=noise, gaze=g,
                                           eye_center=center, iris_r=iris_r)
        name = f"frame_{i:05d}.pgm"
        if i in bad:
            (out / name).write_bytes(b"P5\n%d %d\n255\n" % (img.width, img.height) + b"\x00" * 17)
        else:
            write_image(out / name, img)
        frames.append({"file": name, **truth.to_dict(), "gaze": list(g),
                       "corner": list(synth.eye_corner(truth)), "corrupt": i in bad})
    manifest = {"kind": "eye", "seed": seed, "count": count, "noise": noise,
                "eye_center": list(center), "frames": frames,
                "calibration_map": {"x": list(synth.TRUE_MAP_X), "y": list(synth.TRUE_MAP_Y),
                                    "screen": list(synth.SCREEN)}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest
