"""Binary PPM (P6) reading/writing and detection overlays."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .anchors import Detection
from .errors import InputError

BOX_COLOR = (0, 255, 0)
LANDMARK_COLORS = (
    (255, 0, 0),
    (0, 255, 255),
    (255, 0, 255),
    (0, 128, 255),
    (255, 255, 0),
)


def read_ppm(path: str | Path) -> np.ndarray:
    """Read an 8-bit binary PPM into an HxWx3 RGB uint8 array."""
    data = Path(path).read_bytes()
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise InputError(f"{path}: truncated PPM header")
        return data[start:pos]

    magic = next_token()
    if magic != b"P6":
        raise InputError(f"{path}: not a binary PPM (magic {magic!r}, expected P6)")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise InputError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise InputError(f"{path}: only 8-bit PPM supported (maxval {maxval})")
    if width < 1 or height < 1:
        raise InputError(f"{path}: degenerate image {width}x{height}")
    pos += 1  # single whitespace after maxval
    expected = width * height * 3
    pixels = data[pos : pos + expected]
    if len(pixels) != expected:
        raise InputError(
            f"{path}: pixel payload is {len(pixels)} bytes, expected {expected}"
        )
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Write an HxWx3 uint8 RGB array as binary PPM."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise InputError(f"expected an HxWx3 uint8 image, got {arr.shape} {arr.dtype}")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def draw_detections(image: np.ndarray, dets: Sequence[Detection]) -> np.ndarray:
    """Return a copy of ``image`` with box outlines and landmark dots."""
    out = np.asarray(image).copy()
    h, w = out.shape[:2]
    for det in dets:
        x1, y1, x2, y2 = (int(round(v)) for v in det.box)
        x1, x2 = max(0, x1), min(w - 1, x2)
        y1, y2 = max(0, y1), min(h - 1, y2)
        if x2 <= x1 or y2 <= y1:
            continue
        color = np.array(BOX_COLOR, dtype=np.uint8)
        for t in (0, 1):  # 2 px outline
            xa, xb = min(x1 + t, w - 1), max(x2 - t, 0)
            ya, yb = min(y1 + t, h - 1), max(y2 - t, 0)
            out[ya, xa : xb + 1] = color
            out[yb, xa : xb + 1] = color
            out[ya : yb + 1, xa] = color
            out[ya : yb + 1, xb] = color
        for (px, py), lc in zip(det.landmarks, LANDMARK_COLORS):
            cx, cy = int(round(px)), int(round(py))
            if 0 <= cx < w and 0 <= cy < h:
                out[
                    max(0, cy - 1) : min(h, cy + 2), max(0, cx - 1) : min(w, cx + 2)
                ] = np.array(lc, dtype=np.uint8)
    return out
