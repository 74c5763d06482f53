"""Seeded synthetic eyes, faces and training patches with ground truth."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .imagecore import GrayImage, Rect

PUPIL_GRAY = 30
IRIS_GRAY = 100
SCLERA_GRAY = 200
SKIN_GRAY = 150

FRAME_W, FRAME_H = 320, 240


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _finish(canvas: np.ndarray, noise: float, rng) -> np.ndarray:
    if noise > 0:
        canvas = canvas + rng.normal(0.0, noise, canvas.shape)
    return np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)


def disk_mask(width: int, height: int, cx: float, cy: float, r: float) -> np.ndarray:
    """Pixels whose centers lie within ``r`` of ``(cx, cy)``."""
    yy, xx = np.mgrid[0:height, 0:width]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def ellipse_mask(width, height, cx, cy, a, b) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    return ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0


@dataclass(frozen=True)
class EyeTruth:
    cx: float
    cy: float
    r: float
    iris_r: float
    eye_rect: tuple  # (x, y, w, h) in frame coordinates
    noise: float

    def to_dict(self):
        d = asdict(self)
        d["eye_rect"] = list(self.eye_rect)
        return d


def synth_eye(width: int, height: int, cx: float, cy: float, r: float,
              iris_r: float | None = None, noise: float = 5.0, seed=0,
              levels=(PUPIL_GRAY, IRIS_GRAY, SCLERA_GRAY)) -> tuple[GrayImage, np.ndarray]:
    """An eye crop: sclera ground, iris disk, pupil disk, Gaussian noise.

    Returns the image and the boolean ground-truth pupil mask.
    """
    rng = _rng(seed)
    iris_r = 2.2 * r if iris_r is None else iris_r
    pupil, iris, sclera = levels
    canvas = np.full((height, width), float(sclera))
    canvas[disk_mask(width, height, cx, cy, iris_r)] = iris
    truth = disk_mask(width, height, cx, cy, r)
    canvas[truth] = pupil
    return GrayImage(_finish(canvas, noise, rng)), truth


def synth_eye_frame(r: float, seed=0, noise: float = 5.0, width: int = FRAME_W,
                    height: int = FRAME_H, gaze: tuple[float, float] | None = None,
                    eye_center: tuple[float, float] | None = None,
                    iris_r: float | None = None) -> tuple[GrayImage, EyeTruth]:
    """A close-up eye frame: skin, almond sclera, iris and pupil.

    ``gaze`` in [-1, 1]^2 moves the iris inside the eye opening; the eye
    opening itself (and so ``eye_rect``) stays put, which is what makes the
    eye corner a fixed reference. ``iris_r`` defaults to 2.2 pupil radii;
    pass it explicitly to keep the iris fixed while the pupil dilates.
    """
    rng = _rng(seed)
    iris_r = 2.2 * r if iris_r is None else iris_r
    a, b = 2.4 * iris_r, 1.25 * iris_r
    if eye_center is None:
        ex = rng.uniform(a + 2, width - a - 2)
        ey = rng.uniform(b + 2, height - b - 2)
    else:
        ex, ey = eye_center
    if gaze is None:
        gaze = (rng.uniform(-1, 1), rng.uniform(-1, 1))
    cx = ex + gaze[0] * 0.8 * (a - iris_r)
    cy = ey + gaze[1] * 0.2 * iris_r

    canvas = np.full((height, width), float(SKIN_GRAY))
    opening = ellipse_mask(width, height, ex, ey, a, b)
    canvas[opening] = SCLERA_GRAY
    canvas[opening & disk_mask(width, height, cx, cy, iris_r)] = IRIS_GRAY
    canvas[disk_mask(width, height, cx, cy, r)] = PUPIL_GRAY

    x0 = max(0, int(np.floor(ex - a)))
    y0 = max(0, int(np.floor(ey - b)))
    x1 = min(width, int(np.ceil(ex + a)) + 1)
    y1 = min(height, int(np.ceil(ey + b)) + 1)
    truth = EyeTruth(cx=float(cx), cy=float(cy), r=float(r), iris_r=float(iris_r),
                     eye_rect=(x0, y0, x1 - x0, y1 - y0), noise=float(noise))
    return GrayImage(_finish(canvas, noise, rng)), truth


def eye_corner(truth: EyeTruth) -> tuple[float, float]:
    """Inner (left-hand) corner of the eye opening in frame coordinates."""
    x, y, w, h = truth.eye_rect
    return (float(x), y + (h - 1) / 2.0)


def random_eye_suite(n: int, seed=0, r_range=(8.0, 20.0), noise_max: float = 8.0):
    """``n`` frames with radii and noise levels drawn from the given ranges."""
    rng = _rng(seed)
    out = []
    for _ in range(n):
        r = rng.uniform(*r_range)
        noise = rng.uniform(0.0, noise_max)
        out.append(synth_eye_frame(r, seed=rng, noise=noise))
    return out


# --- cascade training material -------------------------------------------

def render_face(size: int, rng=None, jitter: float = 0.0, skin: float | None = None):
    """Schematic face on a NaN (transparent) canvas.

    Bright oval, two eye patterns in ``size/4`` squares, dark mouth bar.
    Returns the float canvas and the eye squares as ``(x, y, w, h)``.
    """
    rng = _rng(rng)
    s = size / 24.0 * (1.0 + rng.uniform(-jitter, jitter) * 0.1)
    ox = rng.uniform(-jitter, jitter) * size / 24.0
    oy = rng.uniform(-jitter, jitter) * size / 24.0
    skin = rng.uniform(160, 210) if skin is None else skin
    mid = (size - 1) / 2.0
    c = np.full((size, size), np.nan)
    c[ellipse_mask(size, size, mid + ox, mid + oy, 11.0 * s, 12.0 * s)] = skin
    side = max(4, int(round(6.0 * s)))
    eyes = []
    for ex in (-5.0, 5.0):
        x0 = int(round(mid + ox + ex * s - (side - 1) / 2.0))
        y0 = int(round(mid + oy - 3.0 * s - (side - 1) / 2.0))
        x0 = min(max(x0, 0), size - side)
        y0 = min(max(y0, 0), size - side)
        c[y0:y0 + side, x0:x0 + side] = eye_canvas(side, rng, skin=skin)
        eyes.append((x0, y0, side, side))
    c[ellipse_mask(size, size, mid + ox, mid + oy + 6.0 * s, 4.5 * s, 1.2 * s)] = rng.uniform(20, 60)
    return c, eyes


def face_patch(size: int = 24, rng=None, jitter: float = 0.0, noise: float = 6.0) -> np.ndarray:
    """Schematic face on a random darker background."""
    rng = _rng(rng)
    c, _ = render_face(size, rng, jitter)
    c[np.isnan(c)] = rng.uniform(50, 120)
    return _finish(c, noise, rng)


def eye_canvas(size: int, rng=None, jitter: float = 0.0, skin: float | None = None) -> np.ndarray:
    rng = _rng(rng)
    s = size / 24.0 * (1.0 + rng.uniform(-jitter, jitter) * 0.1)
    ox = rng.uniform(-jitter, jitter) * size / 24.0
    oy = rng.uniform(-jitter, jitter) * size / 24.0
    skin = rng.uniform(130, 190) if skin is None else skin
    sclera = rng.uniform(215, 245)
    iris = rng.uniform(20, 70)
    c = np.full((size, size), float(skin))
    mid = (size - 1) / 2.0
    almond = ellipse_mask(size, size, mid + ox, mid + oy, 10.5 * s, 5.5 * s)
    c[almond] = sclera
    c[disk_mask(size, size, mid + ox + rng.uniform(-1.5, 1.5) * s, mid + oy, 4.5 * s) & almond] = iris
    return c


def eye_patch(size: int = 24, rng=None, jitter: float = 0.0, noise: float = 6.0) -> np.ndarray:
    """Schematic eye: bright almond with a dark iris disk, on skin."""
    rng = _rng(rng)
    return _finish(eye_canvas(size, rng, jitter), noise, rng)


def clutter_patch(size: int = 24, rng=None) -> np.ndarray:
    """Random negatives: noise fields, gradients, blobs and bars."""
    rng = _rng(rng)
    kind = rng.integers(0, 5)
    if kind == 0:
        c = np.full((size, size), rng.uniform(0, 255))
    elif kind == 1:
        g = np.linspace(rng.uniform(0, 255), rng.uniform(0, 255), size)
        c = np.tile(g, (size, 1)) if rng.random() < 0.5 else np.tile(g[:, None], (1, size))
    elif kind == 2:
        c = np.full((size, size), rng.uniform(0, 255))
        for _ in range(rng.integers(1, 5)):
            c[disk_mask(size, size, rng.uniform(0, size), rng.uniform(0, size),
                        rng.uniform(2, 9))] = rng.uniform(0, 255)
    elif kind == 3:
        c = np.full((size, size), rng.uniform(0, 255))
        for _ in range(rng.integers(1, 4)):
            x, y = rng.integers(0, size, 2)
            w, h = rng.integers(2, size, 2)
            c[y:y + h, x:x + w] = rng.uniform(0, 255)
    else:
        c = rng.uniform(0, 255, (size, size))
    return _finish(c, rng.uniform(0, 12), rng)


def sample_set(kind: str, n_pos: int, n_neg: int, size: int = 24, seed=0, jitter: float = 1.5):
    """Positive and negative patches for ``kind`` in ``{"face", "eye", "edge"}``.

    ``edge`` is the two-class bright-top versus bright-bottom problem. Face
    and eye negatives mix clutter, partial patterns and windows cut from
    synthetic scenes away from any target.
    """
    rng = _rng(seed)
    if kind == "edge":
        return ([edge_patch(size, rng, top_bright=True) for _ in range(n_pos)],
                [edge_patch(size, rng, top_bright=False) for _ in range(n_neg)])
    make = {"face": face_patch, "eye": eye_patch}[kind]
    other = {"face": eye_patch, "eye": face_patch}[kind]
    pos = [make(size, rng, jitter=jitter) for _ in range(n_pos)]
    neg = []
    for i in range(n_neg):
        slot = i % 6
        if slot == 5:
            neg.append(_off_centre(other(size * 2, rng, jitter=jitter), size, rng))
        elif slot == 4:
            neg.append(_off_centre(make(size * 2, rng, jitter=jitter), size, rng))
        elif slot in (2, 3):
            neg.append(scene_window(kind, size, rng))
        else:
            neg.append(clutter_patch(size, rng))
    return pos, neg


def scene_window(kind: str, size: int = 24, rng=None, max_iou: float = 0.3) -> np.ndarray:
    """A window from a synthetic face scene overlapping no ``kind`` target.

    Face negatives come from anywhere in the scene; eye negatives from the
    upper face band, where the eye search runs. Resampled to ``size``.
    """
    rng = _rng(rng)
    img, truth = synth_face_scene(seed=rng, face_size=int(rng.integers(48, 140)))
    targets = [Rect(*truth.face)] if kind == "face" else [Rect(*e) for e in truth.eyes]
    if kind == "face":
        region = Rect(0, 0, img.width, img.height)
    else:
        fx, fy, fw, fh = truth.face
        region = Rect(fx, fy, fw, max(size, int(0.6 * fh)))
    for _ in range(100):
        side = int(rng.integers(size, min(region.w, region.h) + 1))
        x = int(rng.integers(region.x, region.x + region.w - side + 1))
        y = int(rng.integers(region.y, region.y + region.h - side + 1))
        win = Rect(x, y, side, side)
        if all(win.iou(t) < max_iou for t in targets):
            break
    patch = img.pixels[win.y:win.y + win.h, win.x:win.x + win.w]
    idx = np.minimum(((np.arange(size) + 0.5) * side / size).astype(np.int64), side - 1)
    return patch[np.ix_(idx, idx)].copy()


def _off_centre(big: np.ndarray, size: int, rng) -> np.ndarray:
    y, x = rng.integers(0, big.shape[0] - size + 1, 2)
    return big[y:y + size, x:x + size].copy()


def edge_patch(size: int = 24, rng=None, top_bright: bool = True) -> np.ndarray:
    """Noisy two-level patch split at a random row in the middle half.

    A vertical shading ramp of either sign, up to the step contrast, is
    added on top so no single half-versus-half comparison settles the class.
    """
    rng = _rng(rng)
    hi = rng.uniform(120, 230)
    contrast = rng.uniform(25, 110)
    lo = hi - contrast
    split = int(rng.integers(size // 4, size - size // 4 + 1))
    c = np.empty((size, size))
    c[:split] = hi if top_bright else lo
    c[split:] = lo if top_bright else hi
    ramp = rng.uniform(-1.0, 1.0) * contrast
    c += np.linspace(-ramp / 2, ramp / 2, size)[:, None]
    return _finish(c, rng.uniform(8, 30), rng)


@dataclass(frozen=True)
class FaceTruth:
    face: tuple
    eyes: tuple  # two (x, y, w, h) tuples, left then right


def synth_face_scene(width: int = 200, height: int = 160, face_size: int = 96,
                     seed=0, with_eyes: bool = True, noise: float = 5.0):
    """A scene holding one schematic face at ``face_size``.

    With ``with_eyes=False`` the eye squares are painted over with skin, which
    leaves a face-shaped pattern with nothing for an eye detector to find.
    """
    rng = _rng(seed)
    canvas = rng.uniform(70, 110) + np.zeros((height, width))
    fx = int(rng.integers(0, width - face_size + 1))
    fy = int(rng.integers(0, height - face_size + 1))
    skin = rng.uniform(170, 200)
    face, eyes = render_face(face_size, rng, skin=skin)
    if not with_eyes:
        for x, y, w, h in eyes:
            face[y:y + h, x:x + w] = skin
    region = canvas[fy:fy + face_size, fx:fx + face_size]
    keep = ~np.isnan(face)
    region[keep] = face[keep]
    img = GrayImage(_finish(canvas, noise, rng))
    eyes = tuple((fx + x, fy + y, w, h) for x, y, w, h in eyes)
    return img, FaceTruth(face=(fx, fy, face_size, face_size), eyes=eyes)


def rect_of(t) -> Rect:
    return Rect(*t)


def mine_negatives(kind: str, cascade, n: int, seed=0, size: int = 24,
                   max_scenes: int = 200, max_iou: float = 0.3) -> list[np.ndarray]:
    """False-positive windows of ``cascade`` on fresh scenes, resampled to ``size``.

    Used to refill the negative pool between cascade stages.
    """
    from .cascade.detect import scan_raw
    from .imagecore import crop

    rng = _rng(seed)
    out = []
    for _ in range(max_scenes):
        if len(out) >= n:
            break
        img, truth = synth_face_scene(seed=rng, face_size=int(rng.integers(48, 140)))
        if kind == "face":
            region = Rect(0, 0, img.width, img.height)
            targets = [Rect(*truth.face)]
        else:
            fx, fy, fw, fh = truth.face
            region = Rect(fx, fy, fw, max(size, int(0.6 * fh)))
            targets = [Rect(*e).offset(-fx, -fy) for e in truth.eyes]
        sub = crop(img, region)
        hits = [d for d in scan_raw(cascade, sub) if all(d.rect.iou(t) < max_iou for t in targets)]
        for i in rng.permutation(len(hits))[:max(1, n // 20)]:
            r = hits[int(i)].rect
            patch = sub.pixels[r.y:r.y + r.h, r.x:r.x + r.w]
            ys = np.minimum(((np.arange(size) + 0.5) * r.h / size).astype(np.int64), r.h - 1)
            xs = np.minimum(((np.arange(size) + 0.5) * r.w / size).astype(np.int64), r.w - 1)
            out.append(patch[np.ix_(ys, xs)].copy())
    return out[:n]


# --- calibration sessions --------------------------------------------------

SCREEN = (1920, 1080)
# Feature -> screen map in poly_terms order (1, dx, dy, dx^2, dx*dy, dy^2).
TRUE_MAP_X = (960.0, 12.8, 0.0, 0.02, 0.03, 0.0)
TRUE_MAP_Y = (540.0, 0.0, 10.8, 0.0, 0.02, 0.02)


def true_map(dx, dy, cx=TRUE_MAP_X, cy=TRUE_MAP_Y):
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    terms = (np.ones_like(dx), dx, dy, dx * dx, dx * dy, dy * dy)
    return (sum(c * t for c, t in zip(cx, terms)), sum(c * t for c, t in zip(cy, terms)))


def feature_for_screen(sx: float, sy: float, cx=TRUE_MAP_X, cy=TRUE_MAP_Y) -> tuple[float, float]:
    """Invert :func:`true_map` with Newton steps from the linear guess."""
    f = np.array([(sx - cx[0]) / cx[1], (sy - cy[0]) / cy[2]])
    for _ in range(50):
        x, y = f
        gx, gy = true_map(x, y, cx, cy)
        r = np.array([gx - sx, gy - sy])
        if np.max(np.abs(r)) < 1e-10:
            break
        jac = np.array([[cx[1] + 2 * cx[3] * x + cx[4] * y, cx[2] + cx[4] * x + 2 * cx[5] * y],
                        [cy[1] + 2 * cy[3] * x + cy[4] * y, cy[2] + cy[4] * x + 2 * cy[5] * y]])
        f = f - np.linalg.solve(jac, r)
    return float(f[0]), float(f[1])


def grid_targets(screen=SCREEN, margin: float = 0.1, n: int = 3) -> list[tuple[float, float]]:
    w, h = screen
    xs = np.linspace(margin * w, (1 - margin) * w, n)
    ys = np.linspace(margin * h, (1 - margin) * h, n)
    return [(float(x), float(y)) for y in ys for x in xs]


def calibration_session(seed=0, screen=SCREEN, per_target: int = 30, noise: float = 2.0):
    """Samples for a 3x3 fixation grid: ``per_target`` noisy features per target.

    Returns ``[((dx, dy), (sx, sy)), ...]``.
    """
    rng = _rng(seed)
    out = []
    for sx, sy in grid_targets(screen):
        fx, fy = feature_for_screen(sx, sy)
        for _ in range(per_target):
            out.append(((fx + rng.normal(0, noise), fy + rng.normal(0, noise)), (sx, sy)))
    return out
