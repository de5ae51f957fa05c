"""Prior-box generation, box/landmark decoding, NMS, and the image
pre/post-processing pipeline.

Priors are normalized (cx, cy, w, h) squares laid on ceil(in/step) grids,
two sizes per position, ordered level-major, then row-major over pixels,
then size index. Box deltas follow the SSD-style transform with variances
(0.1, 0.2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError
from .ops import bilinear_upsample
from .tensor import Tensor

DEFAULT_STEPS = (8, 16, 32)
DEFAULT_SIZES = ((16, 32), (64, 128), (256, 512))
# Per-channel means subtracted from the BGR network input.
BGR_MEANS = (104.0, 117.0, 123.0)
_MAX_EXP_ARG = 10.0


@dataclass(frozen=True)
class PriorBox:
    """Anchor in normalized center form relative to the network input."""

    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True)
class PostprocConfig:
    """Detection-time thresholds and resize bounds."""

    conf_threshold: float = 0.5
    nms_iou: float = 0.4
    max_len: int = 1560
    max_wid: int = 1200
    variances: tuple[float, float] = (0.1, 0.2)

    def __post_init__(self):
        if not 0.0 < self.conf_threshold < 1.0:
            raise InputError(
                f"conf_threshold must be in (0, 1), got {self.conf_threshold}"
            )
        if not 0.0 < self.nms_iou < 1.0:
            raise InputError(f"nms_iou must be in (0, 1), got {self.nms_iou}")
        if self.max_len < 1 or self.max_wid < 1:
            raise InputError("resize bounds must be positive")
        if any(v <= 0 for v in self.variances):
            raise InputError(f"variances must be positive, got {self.variances}")


@dataclass
class Detection:
    """One decoded face: corner box, score, and five landmark points, all in
    original-image pixels."""

    box: tuple[float, float, float, float]
    score: float
    landmarks: np.ndarray  # (5, 2)

    def as_dict(self) -> dict:
        return {
            "box": [float(v) for v in self.box],
            "score": float(self.score),
            "landmarks": [[float(x), float(y)] for x, y in self.landmarks],
        }


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------

def level_grid(in_size: int, step: int) -> int:
    return math.ceil(in_size / step)


def prior_counts(
    in_h: int,
    in_w: int,
    steps: Sequence[int] = DEFAULT_STEPS,
    sizes: Sequence[Sequence[int]] = DEFAULT_SIZES,
) -> list[int]:
    return [
        level_grid(in_h, step) * level_grid(in_w, step) * len(level_sizes)
        for step, level_sizes in zip(steps, sizes)
    ]


def generate_priors(
    in_h: int,
    in_w: int,
    steps: Sequence[int] = DEFAULT_STEPS,
    sizes: Sequence[Sequence[int]] = DEFAULT_SIZES,
) -> list[PriorBox]:
    """Lay anchor squares over every feature-map position of every level."""
    if in_h < 1 or in_w < 1:
        raise InputError(f"input size must be positive, got {in_h}x{in_w}")
    priors: list[PriorBox] = []
    for step, level_sizes in zip(steps, sizes):
        fh, fw = level_grid(in_h, step), level_grid(in_w, step)
        for i in range(fh):
            cy = (i + 0.5) * step / in_h
            for j in range(fw):
                cx = (j + 0.5) * step / in_w
                for s in level_sizes:
                    priors.append(PriorBox(cx, cy, s / in_w, s / in_h))
    return priors


def priors_to_array(priors: Sequence[PriorBox]) -> np.ndarray:
    return np.array([(p.cx, p.cy, p.w, p.h) for p in priors], dtype=np.float32).reshape(
        -1, 4
    )


# ---------------------------------------------------------------------------
# Box transforms
# ---------------------------------------------------------------------------

def decode_boxes(
    deltas: np.ndarray, priors: np.ndarray, variances: tuple[float, float] = (0.1, 0.2)
) -> np.ndarray:
    """Deltas + priors -> corner boxes, all normalized.

    Zero deltas reproduce the prior; the width/height exponent is clamped to
    10 to survive garbage logits.
    """
    d = np.asarray(deltas, dtype=np.float32).reshape(-1, 4)
    p = np.asarray(priors, dtype=np.float32).reshape(-1, 4)
    if d.shape[0] != p.shape[0]:
        raise InputError(f"{d.shape[0]} deltas vs {p.shape[0]} priors")
    v0, v1 = np.float32(variances[0]), np.float32(variances[1])
    cx = p[:, 0] + d[:, 0] * v0 * p[:, 2]
    cy = p[:, 1] + d[:, 1] * v0 * p[:, 3]
    w = p[:, 2] * np.exp(np.minimum(d[:, 2] * v1, np.float32(_MAX_EXP_ARG)))
    h = p[:, 3] * np.exp(np.minimum(d[:, 3] * v1, np.float32(_MAX_EXP_ARG)))
    half_w, half_h = w / 2, h / 2
    return np.stack([cx - half_w, cy - half_h, cx + half_w, cy + half_h], axis=1)


def encode_boxes(
    boxes: np.ndarray, priors: np.ndarray, variances: tuple[float, float] = (0.1, 0.2)
) -> np.ndarray:
    """Inverse of ``decode_boxes``: corner boxes -> regression deltas."""
    b = np.asarray(boxes, dtype=np.float32).reshape(-1, 4)
    p = np.asarray(priors, dtype=np.float32).reshape(-1, 4)
    v0, v1 = np.float32(variances[0]), np.float32(variances[1])
    gcx = (b[:, 0] + b[:, 2]) / 2
    gcy = (b[:, 1] + b[:, 3]) / 2
    gw = b[:, 2] - b[:, 0]
    gh = b[:, 3] - b[:, 1]
    return np.stack(
        [
            (gcx - p[:, 0]) / (v0 * p[:, 2]),
            (gcy - p[:, 1]) / (v0 * p[:, 3]),
            np.log(gw / p[:, 2]) / v1,
            np.log(gh / p[:, 3]) / v1,
        ],
        axis=1,
    )


def decode_landmarks(
    deltas: np.ndarray, priors: np.ndarray, variances: tuple[float, float] = (0.1, 0.2)
) -> np.ndarray:
    """Per-point center offsets -> (n, 5, 2) normalized landmark points."""
    d = np.asarray(deltas, dtype=np.float32).reshape(-1, 10)
    p = np.asarray(priors, dtype=np.float32).reshape(-1, 4)
    if d.shape[0] != p.shape[0]:
        raise InputError(f"{d.shape[0]} deltas vs {p.shape[0]} priors")
    v0 = np.float32(variances[0])
    xs = p[:, 0:1] + d[:, 0::2] * v0 * p[:, 2:3]
    ys = p[:, 1:2] + d[:, 1::2] * v0 * p[:, 3:4]
    return np.stack([xs, ys], axis=2)


# ---------------------------------------------------------------------------
# Overlap and suppression
# ---------------------------------------------------------------------------

def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection-over-union of two corner boxes; 0 for degenerate boxes."""
    ax1, ay1, ax2, ay2 = (float(v) for v in a)
    bx1, by1, bx2, by2 = (float(v) for v in b)
    area_a = max(0.0, ax2 - ax1) * max(0.0, ay2 - ay1)
    area_b = max(0.0, bx2 - bx1) * max(0.0, by2 - by1)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = max(0.0, iw) * max(0.0, ih)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between corner-box arrays (n, 4) and (m, 4)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = np.clip(a[:, 2] - a[:, 0], 0, None) * np.clip(a[:, 3] - a[:, 1], 0, None)
    area_b = np.clip(b[:, 2] - b[:, 0], 0, None) * np.clip(b[:, 3] - b[:, 1], 0, None)
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out


def nms(dets: Sequence[Detection], iou_thresh: float) -> list[Detection]:
    """Greedy suppression: keep the best remaining detection, drop everything
    overlapping it above the threshold. Ties break toward earlier input index;
    the kept list is score-descending."""
    if not dets:
        return []
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    boxes = np.array([dets[i].box for i in order], dtype=np.float64)
    alive = np.ones(len(order), dtype=bool)
    kept: list[Detection] = []
    for pos in range(len(order)):
        if not alive[pos]:
            continue
        kept.append(dets[order[pos]])
        rest = np.nonzero(alive)[0]
        rest = rest[rest > pos]
        if rest.size:
            overlaps = iou_matrix(boxes[pos : pos + 1], boxes[rest])[0]
            alive[rest[overlaps > iou_thresh]] = False
    return kept


# ---------------------------------------------------------------------------
# Pre / post processing
# ---------------------------------------------------------------------------

def resize_scale(height: int, width: int, cfg: PostprocConfig) -> float:
    """Proportional-expansion factor: long side capped at ``max_len``, short
    side at ``max_wid``."""
    long_side = max(height, width)
    short_side = min(height, width)
    return min(cfg.max_len / long_side, cfg.max_wid / short_side)


def resized_dims(height: int, width: int, scale: float) -> tuple[int, int]:
    return max(1, round(height * scale)), max(1, round(width * scale))


def preprocess(
    image: np.ndarray, cfg: PostprocConfig | None = None, resize: bool = True
) -> tuple[Tensor, float]:
    """8-bit RGB HxWx3 -> network input tensor plus the applied scale.

    Converts to BGR, proportionally resizes so the long side is at most
    ``max_len`` and the short side at most ``max_wid``, and subtracts the
    per-channel means. The returned scale maps network coordinates back to
    original pixels (original = network / scale).
    """
    cfg = cfg or PostprocConfig()
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InputError(f"expected an HxWx3 RGB image, got shape {arr.shape}")
    h, w = arr.shape[:2]
    if h < 1 or w < 1:
        raise InputError(f"image has a zero dimension: {h}x{w}")
    scale = resize_scale(h, w, cfg) if resize else 1.0
    out_h, out_w = resized_dims(h, w, scale)

    x = arr.astype(np.float32)[:, :, ::-1]  # RGB -> BGR
    x = np.ascontiguousarray(x.transpose(2, 0, 1))[None]
    if (out_h, out_w) != (h, w):
        x = bilinear_upsample(x, out_h, out_w)
    x -= np.array(BGR_MEANS, dtype=np.float32).reshape(1, 3, 1, 1)
    return x, float(scale)


def face_scores(class_logits: np.ndarray) -> np.ndarray:
    """Softmax over (background, face) logit rows -> face probability."""
    logits = np.asarray(class_logits, dtype=np.float32).reshape(-1, 2)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return (e[:, 1] / e.sum(axis=1)).astype(np.float32)


def postprocess(
    raw,
    priors: np.ndarray | Sequence[PriorBox],
    cfg: PostprocConfig,
    scale: float,
    image_size: tuple[int, int],
) -> list[Detection]:
    """Score, threshold, decode, rescale to original pixels, clip, and NMS."""
    priors_arr = (
        priors if isinstance(priors, np.ndarray) else priors_to_array(priors)
    )
    logits = np.asarray(raw.class_logits, dtype=np.float32).reshape(-1, 2)
    if logits.shape[0] != priors_arr.shape[0]:
        raise InputError(
            f"{logits.shape[0]} prediction rows vs {priors_arr.shape[0]} priors"
        )
    orig_h, orig_w = image_size
    net_h, net_w = resized_dims(orig_h, orig_w, scale)

    scores = face_scores(logits)
    keep = np.nonzero(scores >= cfg.conf_threshold)[0]
    if keep.size == 0:
        return []

    boxes = decode_boxes(raw.box_deltas[keep], priors_arr[keep], cfg.variances)
    lands = decode_landmarks(raw.landmark_deltas[keep], priors_arr[keep], cfg.variances)

    # normalized -> network pixels -> original pixels
    to_x = net_w / scale
    to_y = net_h / scale
    boxes = boxes * np.array([to_x, to_y, to_x, to_y], dtype=np.float32)
    boxes[:, 0::2] = np.clip(boxes[:, 0::2], 0.0, float(orig_w))
    boxes[:, 1::2] = np.clip(boxes[:, 1::2], 0.0, float(orig_h))
    lands = lands * np.array([to_x, to_y], dtype=np.float32)

    dets = [
        Detection(
            box=(float(b[0]), float(b[1]), float(b[2]), float(b[3])),
            score=float(scores[k]),
            landmarks=lands[i].astype(np.float64),
        )
        for i, (k, b) in enumerate(zip(keep, boxes))
        if b[2] > b[0] and b[3] > b[1]
    ]
    return nms(dets, cfg.nms_iou)
