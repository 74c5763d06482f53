"""Binary PGM (P5) reading/writing, plus PNG and friends through Pillow."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .imagecore import GrayImage, rgb_to_gray


class ImageFormatError(ValueError):
    pass


def _tokens(data: bytes, count: int):
    """First ``count`` header tokens and the offset just past the last one."""
    out, i, n = [], 0, len(data)
    while len(out) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        if j == i:
            raise ImageFormatError("truncated PGM header")
        out.append(data[i:j])
        i = j
    return out, i


def decode_pgm(data: bytes) -> GrayImage:
    if not data.startswith(b"P5"):
        raise ImageFormatError("not a binary PGM (missing P5 magic)")
    (magic, w, h, maxval), end = _tokens(data, 4)
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ImageFormatError("malformed PGM header") from exc
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise ImageFormatError("PGM has no pixels")
    # Exactly one whitespace byte separates the header from the raster.
    start = end + 1
    raster = data[start:start + width * height]
    if len(raster) != width * height:
        raise ImageFormatError(f"PGM raster truncated: {len(raster)} of {width * height} bytes")
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def encode_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(img.pixels, dtype=np.uint8).tobytes()


def read_pgm(path) -> GrayImage:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path, img: GrayImage) -> None:
    Path(path).write_bytes(encode_pgm(img))


def read_image(path) -> GrayImage:
    """PGM natively; other formats go through Pillow and fixed-weight luma."""
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(b"P5"):
        return decode_pgm(data)
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise ImageFormatError(f"{path.name}: non-PGM input needs Pillow") from exc
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "L":
                return GrayImage(np.asarray(im))
            return rgb_to_gray(np.asarray(im.convert("RGB")))
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path.name}: unreadable image ({exc})") from exc


def write_image(path, img: GrayImage) -> None:
    path = Path(path)
    if path.suffix.lower() in (".pgm", ""):
        write_pgm(path, img)
        return
    from PIL import Image
    Image.fromarray(np.ascontiguousarray(img.pixels)).save(path)
