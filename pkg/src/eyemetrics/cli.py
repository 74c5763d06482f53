"""Command-line entry point: detect, tension, calibrate, train, synth."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, synth
from .cascade import Cascade, TrainingError, default_bank, normalize_sample, train_cascade
from .gaze import DegenerateCalibrationError, calibrate
from .imagecore import GrayImage
from .io import ImageFormatError, read_image, write_image
from .pipeline import ConfigError, RunConfig, generate_synthetic, run_pipeline, run_tension

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2
IMAGE_SUFFIXES = (".pgm", ".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff")

log = logging.getLogger("eyemetrics")


def _ints(text: str, n: int, what: str):
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated integers")
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated integers")
    return tuple(vals)


def _floats(text: str, n: int, what: str):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated numbers")
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated numbers")
    return tuple(vals)


def _range(text: str):
    """``start:stop`` half-open frame range."""
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("range must be start:stop")
    return a, b


def _expand_inputs(items):
    out = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            out += sorted(q for q in p.iterdir() if q.suffix.lower() in IMAGE_SUFFIXES)
        else:
            out.append(p)
    return out


def _add_detect(sub):
    p = sub.add_parser("detect", help="run the pupil pipeline over frames and write a report")
    p.add_argument("inputs", nargs="+", help="image files or directories, in frame order")
    p.add_argument("-o", "--output", help="report path (default: stdout)")
    d = RunConfig()
    p.add_argument("--bt", type=float, default=d.bt, help="histogram smoothing bandwidth-time")
    p.add_argument("--significance", type=float, default=d.significance)
    p.add_argument("--fallback-percentile", type=float, default=d.fallback_percentile)
    p.add_argument("--n1", type=int, default=d.n1, help="erosions before dilation")
    p.add_argument("--n2", type=int, default=d.n2, help="dilations")
    p.add_argument("--se", dest="se_path", help="structuring element as a 0/1 text matrix")
    p.add_argument("--largest-component", action="store_true")
    p.add_argument("--scale-factor", type=float, default=d.scale_factor)
    p.add_argument("--stride", dest="stride_fraction", type=float, default=d.stride_fraction,
                   help="scan stride as a fraction of the window width")
    p.add_argument("--tension-saturation", type=float, default=d.tension_saturation)
    p.add_argument("--calibration", dest="calibration_path")
    p.add_argument("--face-cascade", dest="face_cascade_path")
    p.add_argument("--eye-cascade", dest="eye_cascade_path")
    p.add_argument("--corner", type=lambda s: _floats(s, 2, "corner"), help="eye corner x,y")
    p.add_argument("--eye-region", type=lambda s: _ints(s, 4, "eye region"),
                   help="fixed eye rect x,y,w,h; skips face/eye detection")
    p.add_argument("--overlays", dest="overlay_dir", help="write annotated frames here")
    p.add_argument("--workers", type=int, default=1)


def cmd_detect(args) -> int:
    fields = set(RunConfig.__dataclass_fields__)
    cfg = RunConfig(**{k: v for k, v in vars(args).items() if k in fields})
    inputs = _expand_inputs(args.inputs)
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        with open(args.output, "w") as fh:
            _, failures = run_pipeline(inputs, cfg, fh)
    else:
        _, failures = run_pipeline(inputs, cfg, sys.stdout)
    if failures:
        log.warning("%d of %d frames failed", failures, len(inputs))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_tension(args) -> int:
    rep = run_tension(args.report, args.baseline, args.stimulus, args.saturation, args.eye)
    print(json.dumps(rep.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    """Sample file: ``{"samples": [{"feature": [dx, dy], "screen": [sx, sy]}, ...],
    optional "degree" and "screen": [w, h]}``."""
    doc = json.loads(Path(args.samples).read_text())
    samples = [(tuple(s["feature"]), tuple(s["screen"])) for s in doc["samples"]]
    degree = args.degree or int(doc.get("degree", 2))
    screen = args.screen or doc.get("screen")
    m = calibrate(samples, degree, screen)
    m.save(args.output)
    print(json.dumps({"degree": m.degree, "residual": m.residual, "samples": len(samples)},
                     sort_keys=True))
    return EXIT_OK


def _load_dir(path, window):
    files = sorted(q for q in Path(path).iterdir() if q.suffix.lower() in IMAGE_SUFFIXES)
    return [normalize_sample(read_image(f), window) for f in files]


def cmd_train(args) -> int:
    window = args.window
    pos = _load_dir(args.pos, window)
    neg = _load_dir(args.neg, window)
    if args.max_neg and len(neg) > args.max_neg:
        idx = np.sort(np.random.default_rng(args.seed).choice(len(neg), args.max_neg, replace=False))
        neg = [neg[i] for i in idx]
    c = train_cascade(pos, neg, default_bank(window), args.rounds, window, args.detection_rate)
    meta = {"rounds": list(args.rounds), "positives": len(pos), "negatives": len(neg),
            "seed": args.seed, "detection_rate": args.detection_rate}
    Cascade(c.stages, c.window, meta).save(args.output)
    print(json.dumps({"stages": [len(s.members) for s in c.stages]}))
    return EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.output)
    if args.kind == "eyes":
        gaze = None
        if args.gaze_sweep:
            gaze = [(float(g), 0.0) for g in np.linspace(-0.8, 0.8, args.count)]
        m = generate_synthetic(out, args.count, args.seed, args.radius, args.radius_end,
                               args.noise, args.center, gaze, args.corrupt or ())
        print(json.dumps({"frames": len(m["frames"]), "eye_center": m["eye_center"]}))
    elif args.kind == "faces":
        out.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(args.seed)
        recs = []
        for i in range(args.count):
            size = int(rng.integers(64, 140))
            img, truth = synth.synth_face_scene(face_size=size, seed=rng, noise=args.noise)
            name = f"scene_{i:05d}.pgm"
            write_image(out / name, img)
            recs.append({"file": name, "face": list(truth.face),
                         "eyes": [list(e) for e in truth.eyes]})
        (out / "manifest.json").write_text(json.dumps(
            {"kind": "faces", "seed": args.seed, "frames": recs}, indent=1, sort_keys=True) + "\n")
    elif args.kind in ("face-samples", "eye-samples", "edge-samples"):
        kind = args.kind.split("-")[0]
        pos, neg = synth.sample_set(kind, args.count, args.count, seed=args.seed)
        for sub, arrs in (("pos", pos), ("neg", neg)):
            (out / sub).mkdir(parents=True, exist_ok=True)
            for i, a in enumerate(arrs):
                write_image(out / sub / f"{i:05d}.pgm", GrayImage(a))
    else:  # calibration
        out.parent.mkdir(parents=True, exist_ok=True)
        samples = synth.calibration_session(args.seed, noise=args.noise)
        doc = {"degree": 2, "screen": list(synth.SCREEN), "seed": args.seed,
               "true_map": {"x": list(synth.TRUE_MAP_X), "y": list(synth.TRUE_MAP_Y)},
               "samples": [{"feature": list(f), "screen": list(s)} for f, s in samples]}
        out.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # Usage errors are config errors; exit status 2 means partial failure here.
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="eyemetrics", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    _add_detect(sub)

    p = sub.add_parser("tension", help="tension score from a detect report")
    p.add_argument("report")
    p.add_argument("--baseline", type=_range, required=True, help="start:stop frames")
    p.add_argument("--stimulus", type=_range, required=True, help="start:stop frames")
    p.add_argument("--saturation", type=float, help="default: the report's setting")
    p.add_argument("--eye", type=int, default=0, help="which eye of each frame")

    p = sub.add_parser("calibrate", help="fit a feature -> screen map from samples")
    p.add_argument("samples")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--degree", type=int, choices=(1, 2))
    p.add_argument("--screen", type=lambda s: _ints(s, 2, "screen"), help="width,height")

    p = sub.add_parser("train", help="train a Haar cascade from sample directories")
    p.add_argument("--pos", required=True)
    p.add_argument("--neg", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--rounds", type=lambda s: [int(v) for v in s.split(",")], default=[10],
                   help="boosting rounds per stage, e.g. 4,8,16")
    p.add_argument("--window", type=lambda s: _ints(s, 2, "window"), default=(24, 24))
    p.add_argument("--detection-rate", type=float, default=0.99)
    p.add_argument("--max-neg", type=int, default=0, help="subsample negatives to this many")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="write synthetic test data")
    p.add_argument("kind", choices=("eyes", "faces", "face-samples", "eye-samples",
                                    "edge-samples", "calibration"))
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=5.0)
    p.add_argument("--radius", type=float, default=12.0)
    p.add_argument("--radius-end", type=float, help="ramp the radius up to this value")
    p.add_argument("--center", type=lambda s: _floats(s, 2, "center"), help="eye center x,y")
    p.add_argument("--gaze-sweep", action="store_true", help="move the pupil across frames")
    p.add_argument("--corrupt", type=int, action="append", help="frame index to corrupt")
    return ap


COMMANDS = {"detect": cmd_detect, "tension": cmd_tension, "calibrate": cmd_calibrate,
            "train": cmd_train, "synth": cmd_synth}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DegenerateCalibrationError, TrainingError, ImageFormatError,
            OSError, ValueError, KeyError) as exc:
        print(f"eyemetrics {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
