"""Desk-scale evaluation: detection/ground-truth matching, average precision,
synthetic scenes, and the ground-truth file format.

Scenes on disk are JSON objects ``{"image": <path>, "boxes": [[x1,y1,x2,y2],
...]}``, one per file, with the image path resolved relative to the JSON
file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .anchors import Detection, iou_matrix
from .errors import InputError


@dataclass
class GroundTruthScene:
    """Image dimensions plus annotated corner boxes in original pixels."""

    width: int
    height: int
    boxes: np.ndarray  # (m, 4)
    difficulty: list[str] | None = None

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        if self.boxes.size and (
            np.any(self.boxes[:, [0, 2]] < 0)
            or np.any(self.boxes[:, [1, 3]] < 0)
            or np.any(self.boxes[:, [0, 2]] > self.width)
            or np.any(self.boxes[:, [1, 3]] > self.height)
        ):
            raise InputError("ground-truth boxes must lie within image bounds")


class APResult(NamedTuple):
    """Average precision plus the raw precision/recall curve behind it.

    ``ap`` is None when no ground truth exists (undefined metric).
    """

    ap: float | None
    precision: np.ndarray
    recall: np.ndarray
    scores: np.ndarray


def match_detections(
    dets: Sequence[Detection], gt_boxes: np.ndarray, iou_thresh: float = 0.5
) -> np.ndarray:
    """Greedy TP/FP flags for score-sorted detections.

    Each detection claims the highest-overlap still-unmatched ground truth
    with IoU at or above the threshold; every ground truth is matched at most
    once. Requires detections sorted by descending score.
    """
    scores = [d.score for d in dets]
    if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
        raise InputError("detections must be sorted by descending score")
    gt = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    flags = np.zeros(len(dets), dtype=bool)
    if len(dets) == 0 or gt.shape[0] == 0:
        return flags
    boxes = np.array([d.box for d in dets], dtype=np.float64)
    overlaps = iou_matrix(boxes, gt)
    taken = np.zeros(gt.shape[0], dtype=bool)
    for i in range(len(dets)):
        row = np.where(taken, -1.0, overlaps[i])
        g = int(row.argmax())
        if row[g] >= iou_thresh:
            flags[i] = True
            taken[g] = True
    return flags


def ap_from_flags(scores, tp_flags, total_gt: int) -> APResult:
    """All-point interpolated average precision from scored TP/FP flags."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    flags = np.asarray(tp_flags, dtype=bool).reshape(-1)
    if scores.shape[0] != flags.shape[0]:
        raise InputError("scores and flags must have equal length")
    if total_gt == 0:
        return APResult(None, np.zeros(0), np.zeros(0), np.zeros(0))
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    flags = flags[order]
    scores = scores[order]
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    precision = tp / np.maximum(tp + fp, 1)
    recall = tp / total_gt
    if len(scores) == 0:
        return APResult(0.0, precision, recall, scores)

    # Envelope: max precision at recall >= r, then sum rectangle areas.
    p_env = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recall, p_env):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return APResult(float(ap), precision, recall, scores)


def average_precision(
    scene_detections: dict[str, Sequence[Detection]],
    scene_gts: dict[str, GroundTruthScene],
    iou_thresh: float = 0.5,
) -> APResult:
    """Corpus AP over per-scene detections matched against per-scene truth."""
    all_scores: list[float] = []
    all_flags: list[bool] = []
    total_gt = 0
    for key in sorted(scene_gts):
        gt = scene_gts[key]
        total_gt += gt.boxes.shape[0]
        dets = sorted(
            scene_detections.get(key, []), key=lambda d: -d.score
        )
        flags = match_detections(dets, gt.boxes, iou_thresh)
        all_scores.extend(d.score for d in dets)
        all_flags.extend(bool(f) for f in flags)
    return ap_from_flags(np.array(all_scores), np.array(all_flags), total_gt)


# ---------------------------------------------------------------------------
# Synthetic scenes
# ---------------------------------------------------------------------------

def synth_scene(
    seed: int, n_faces: int, dims: tuple[int, int] = (320, 320)
) -> tuple[np.ndarray, GroundTruthScene]:
    """Render a deterministic test scene: elliptical face-like blobs with
    landmark dots on a textured background. Returns an 8-bit RGB image and
    the bounding boxes of the blobs."""
    h, w = dims
    if h < 32 or w < 32:
        raise InputError(f"scene dims must be at least 32x32, got {h}x{w}")
    rng = np.random.default_rng(seed)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    base = 60.0 + 50.0 * (xx / w) + 30.0 * (yy / h)
    noise = rng.normal(0.0, 12.0, size=(h, w))
    img = np.stack(
        [base + noise + shift for shift in (0.0, 8.0, -10.0)], axis=2
    )

    boxes = []
    r_max = min(h, w) // 6
    for _ in range(n_faces):
        for attempt in range(200):
            rx = float(rng.integers(8, max(9, r_max)))
            ry = rx * float(rng.uniform(1.0, 1.3))
            cx = float(rng.uniform(rx + 1, w - rx - 1))
            cy = float(rng.uniform(ry + 1, h - ry - 1))
            cand = (cx - rx, cy - ry, cx + rx, cy + ry)
            if all(_box_iou(cand, b) < 0.05 for b in boxes):
                break
        else:
            raise InputError(
                f"could not place {n_faces} faces in a {h}x{w} scene"
            )
        mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        tone = rng.uniform(-15.0, 15.0)
        for ch, level in enumerate((225.0, 190.0, 165.0)):
            img[:, :, ch][mask] = level + tone
        dot = max(1.0, rx / 6.0)
        for dx, dy in ((-0.4, -0.3), (0.4, -0.3), (0.0, 0.15), (-0.3, 0.55), (0.3, 0.55)):
            px, py = cx + dx * rx, cy + dy * ry
            dmask = (xx - px) ** 2 + (yy - py) ** 2 <= dot**2
            img[dmask] = 30.0
        boxes.append(cand)

    image = np.clip(img, 0, 255).astype(np.uint8)
    return image, GroundTruthScene(width=w, height=h, boxes=np.array(boxes).reshape(-1, 4))


def _box_iou(a, b) -> float:
    m = iou_matrix(np.array([a]), np.array([b]))
    return float(m[0, 0])


# ---------------------------------------------------------------------------
# Scene files
# ---------------------------------------------------------------------------

def save_scene(json_path: str | Path, image_name: str, scene: GroundTruthScene) -> None:
    payload = {
        "image": image_name,
        "boxes": [[float(v) for v in box] for box in scene.boxes],
    }
    Path(json_path).write_text(json.dumps(payload, indent=2) + "\n")


def load_scene(json_path: str | Path) -> tuple[Path, list[list[float]]]:
    """Parse a scene file; returns the resolved image path and raw boxes."""
    path = Path(json_path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed ground truth in {path}: {exc}") from exc
    if not isinstance(payload, dict) or "image" not in payload or "boxes" not in payload:
        raise InputError(
            f"malformed ground truth in {path}: expected keys 'image' and 'boxes'"
        )
    boxes = payload["boxes"]
    if not isinstance(boxes, list) or any(
        not isinstance(b, list) or len(b) != 4 for b in boxes
    ):
        raise InputError(f"malformed ground truth in {path}: boxes must be [x1,y1,x2,y2]")
    image_path = Path(payload["image"])
    if not image_path.is_absolute():
        image_path = path.parent / image_path
    return image_path, [[float(v) for v in b] for b in boxes]
