import json
import math

import numpy as np
import pytest

from eyemetrics import synth
from eyemetrics.cli import main
from eyemetrics.io import read_image
from eyemetrics.pipeline import (ConfigError, RunConfig, draw_overlay, generate_synthetic,
                                 process_frame, prepare, read_report, run_pipeline, run_tension)


@pytest.fixture
def eye_run(tmp_path):
    m = generate_synthetic(tmp_path / "frames", 5, seed=2, radius=12)
    paths = sorted((tmp_path / "frames").glob("*.pgm"))
    rect = tuple(m["frames"][0]["eye_rect"])
    return m, paths, rect


def test_generate_is_deterministic(tmp_path):
    generate_synthetic(tmp_path / "a", 3, seed=7, radius=10, radius_end=12)
    generate_synthetic(tmp_path / "b", 3, seed=7, radius=10, radius_end=12)
    for name in ["frame_00000.pgm", "frame_00001.pgm", "frame_00002.pgm", "manifest.json"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_echoes_requested_values(tmp_path):
    m = generate_synthetic(tmp_path, 1, seed=0, radius=12, center=(33, 29), noise=0)
    f = m["frames"][0]
    assert (f["cx"], f["cy"], f["r"]) == (33, 29, 12)
    assert m["calibration_map"]["x"] == list(synth.TRUE_MAP_X)


def test_generated_eye_meets_pupil_tolerances(eye_run):
    m, paths, rect = eye_run
    lines, failures = run_pipeline(paths, RunConfig(eye_region=rect))
    assert failures == 0
    _, recs = read_report(lines)
    for rec, truth in zip(recs, m["frames"]):
        p = rec["pupils"][0]
        assert math.hypot(p["x0"] - truth["cx"], p["y0"] - truth["cy"]) <= 1.5
        assert abs(p["r"] - truth["r"]) <= 0.1 * truth["r"]


def test_report_structure_and_header(eye_run):
    m, paths, rect = eye_run
    cfg = RunConfig(eye_region=rect)
    lines, _ = run_pipeline(paths, cfg)
    head, recs = read_report(lines)
    assert len(recs) == 5
    assert set(RunConfig.__dataclass_fields__) <= set(head["config"])
    for i, r in enumerate(recs):
        assert r["type"] == "frame" and r["frame_index"] == i
        assert r["face"] is None and r["eyes"] == [list(rect)]
        assert r["gaze"] is None
        assert set(r["diagnostics"][0]) >= {"threshold", "num_pix", "confidence"}


def test_corrupt_frame_is_isolated(tmp_path):
    m = generate_synthetic(tmp_path / "f", 5, seed=2, radius=12, corrupt=[3])
    paths = sorted((tmp_path / "f").glob("*.pgm"))
    rect = tuple(m["frames"][0]["eye_rect"])
    lines, failures = run_pipeline(paths, RunConfig(eye_region=rect))
    assert failures == 1
    _, recs = read_report(lines)
    assert [r["type"] for r in recs] == ["frame"] * 3 + ["error"] + ["frame"]
    clean = generate_synthetic(tmp_path / "g", 5, seed=2, radius=12)
    clean_lines, _ = run_pipeline(sorted((tmp_path / "g").glob("*.pgm")), RunConfig(eye_region=rect))
    for i in (0, 1, 2, 4):
        assert lines[i + 1] == clean_lines[i + 1]


def test_workers_do_not_change_output(eye_run):
    _, paths, rect = eye_run
    a, _ = run_pipeline(paths, RunConfig(eye_region=rect))
    b, _ = run_pipeline(paths, RunConfig(eye_region=rect, workers=3))
    assert a[1:] == b[1:]


def test_invalid_config_aborts_before_frames(eye_run, tmp_path):
    _, paths, rect = eye_run
    for bad in (RunConfig(n1=3, n2=2), RunConfig(scale_factor=1.0), RunConfig(bt=0),
                RunConfig(face_cascade_path=str(tmp_path / "missing.json")),
                RunConfig(eye_region=rect, calibration_path=str(tmp_path / "nope.json"))):
        with pytest.raises(ConfigError):
            run_pipeline(paths, bad)
    with pytest.raises(ConfigError):
        run_pipeline([], RunConfig(eye_region=rect))


def test_gaze_needs_calibration_and_pupil(tmp_path):
    gaze = [(g, 0.0) for g in np.linspace(-0.8, 0.8, 5)]
    m = generate_synthetic(tmp_path / "f", 5, seed=1, radius=10, gaze=gaze)
    paths = sorted((tmp_path / "f").glob("*.pgm"))
    rect = tuple(m["frames"][0]["eye_rect"])
    corner = tuple(m["frames"][0]["corner"])
    # calibration where screen x follows the horizontal corner feature
    samples = [((dx, dy), (10 * dx, 10 * dy)) for dx in (20, 60, 100) for dy in (-10, 0, 10)]
    from eyemetrics.gaze import calibrate
    calibrate(samples, degree=1).save(tmp_path / "cal.json")
    cfg = RunConfig(eye_region=rect, corner=corner, calibration_path=str(tmp_path / "cal.json"))
    _, recs = read_report(run_pipeline(paths, cfg)[0])
    xs = [r["gaze"]["x"] for r in recs]
    assert all(b > a for a, b in zip(xs, xs[1:]))
    for r in recs:
        p = r["pupils"][0]
        assert r["gaze"]["x"] == pytest.approx(10 * (p["x0"] - corner[0]))
    # no corner: no gaze
    _, recs = read_report(run_pipeline(paths, RunConfig(eye_region=rect,
                                       calibration_path=str(tmp_path / "cal.json")))[0])
    assert all(r["gaze"] is None for r in recs)


def test_overlay_levels(eye_run, tmp_path):
    _, paths, rect = eye_run
    cfg = RunConfig(eye_region=rect, overlay_dir=str(tmp_path / "ov"))
    run_pipeline(paths, cfg)
    ov = read_image(tmp_path / "ov" / "overlay_00000.pgm")
    src = read_image(paths[0])
    assert ov.width == src.width
    x, y, w, h = rect
    assert (ov.pixels[y, x:x + w] == 255).all()
    res = prepare(RunConfig(eye_region=rect))
    rep = process_frame(res, 0, src)
    p = rep.pupils[0]
    drawn = draw_overlay(src, rep).pixels
    assert drawn[p.y0, p.x0] == 128


def test_face_pipeline_with_shipped_cascades(tmp_path):
    from eyemetrics.io import write_image
    img, truth = synth.synth_face_scene(seed=7, face_size=110)
    write_image(tmp_path / "s.pgm", img)
    _, recs = read_report(run_pipeline([tmp_path / "s.pgm"], RunConfig())[0])
    assert recs[0]["face"] is not None and len(recs[0]["eyes"]) == 2


def test_tension_from_report(tmp_path):
    m = generate_synthetic(tmp_path / "f", 20, seed=3, radius=10, radius_end=14)
    paths = sorted((tmp_path / "f").glob("*.pgm"))
    rect = tuple(m["frames"][0]["eye_rect"])
    lines, _ = run_pipeline(paths, RunConfig(eye_region=rect))
    (tmp_path / "r.jsonl").write_text("\n".join(lines) + "\n")
    rep = run_tension(tmp_path / "r.jsonl", (0, 5), (15, 20))
    _, recs = read_report(lines)
    radii = [r["pupils"][0]["r"] for r in recs]
    base, stim = sum(radii[:5]) / 5, sum(radii[15:]) / 5
    assert rep.baseline_r == base and rep.stimulus_r == stim
    assert rep.score == min(max((stim - base) / (0.2 * base), 0.0), 1.0)
    with pytest.raises(ValueError):
        run_tension(tmp_path / "r.jsonl", (0, 25), (25, 30))


def test_cli_exit_codes(tmp_path, capsys):
    frames = tmp_path / "f"
    assert main(["synth", "eyes", "-o", str(frames), "--count", "4", "--seed", "1",
                 "--corrupt", "2"]) == 0
    m = json.loads((frames / "manifest.json").read_text())
    er = ",".join(str(v) for v in m["frames"][0]["eye_rect"])
    out = tmp_path / "r.jsonl"
    assert main(["detect", str(frames), "--eye-region", er, "-o", str(out)]) == 2
    assert len(out.read_text().splitlines()) == 5
    assert main(["detect", str(frames / "frame_00000.pgm"), "--eye-region", er,
                 "-o", str(out)]) == 0
    assert main(["detect", str(frames), "--n1", "5", "--n2", "1"]) == 1
    assert main(["detect", str(frames), "--eye-region", "1,2,3"]) == 1
    assert main(["tension", str(out), "--baseline", "0:1", "--stimulus", "1:2"]) == 1


def test_cli_calibrate_and_train(tmp_path, capsys):
    s = tmp_path / "s.json"
    assert main(["synth", "calibration", "-o", str(s), "--seed", "0"]) == 0
    assert main(["calibrate", str(s), "-o", str(tmp_path / "cal.json")]) == 0
    doc = json.loads((tmp_path / "cal.json").read_text())
    assert doc["degree"] == 2 and len(doc["coeffs_x"]) == 6
    assert main(["synth", "edge-samples", "-o", str(tmp_path / "e"), "--count", "40"]) == 0
    assert main(["train", "--pos", str(tmp_path / "e/pos"), "--neg", str(tmp_path / "e/neg"),
                 "-o", str(tmp_path / "c.json"), "--rounds", "3"]) == 0
    from eyemetrics.cascade import Cascade
    assert len(Cascade.load(tmp_path / "c.json").stages) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"samples": [{"feature": [0, 0], "screen": [0, 0]}]}))
    assert main(["calibrate", str(bad), "-o", str(tmp_path / "x.json")]) == 1
