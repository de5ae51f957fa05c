"""Classification and regression losses, their analytic gradients, the
epoch-based loss switch, and prior/ground-truth matching.

Probabilities are handled in double precision; log arguments are clamped
below at 1e-7 so fully confident predictions yield exactly zero loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anchors import encode_boxes, iou_matrix
from .errors import InputError

PROB_EPS = 1e-7

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1


@dataclass(frozen=True)
class LossParams:
    """Focal-loss weighting plus the training-schedule switch point."""

    alpha: float = 0.25
    gamma: float = 2.0
    schedule_switch_epoch: int = 245
    total_epochs: int = 250

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.gamma < 0.0:
            raise InputError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 <= self.schedule_switch_epoch <= self.total_epochs:
            raise InputError(
                f"switch epoch {self.schedule_switch_epoch} outside "
                f"[0, {self.total_epochs}]"
            )


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


def _reduce(values: np.ndarray, reduction: str):
    if reduction == "mean":
        return float(np.mean(values))
    if reduction == "none":
        return float(values) if values.ndim == 0 else values
    raise InputError(f"unknown reduction {reduction!r}")


def smooth_l1(x):
    """0.5 x^2 inside |x| < 1, |x| - 0.5 outside; continuous everywhere."""
    x = _as_array(x)
    out = np.where(np.abs(x) < 1.0, 0.5 * x * x, np.abs(x) - 0.5)
    return float(out) if out.ndim == 0 else out


def cross_entropy(p, y, reduction: str = "mean"):
    """Binary cross-entropy -[y log p + (1-y) log(1-p)]."""
    p, y = _as_array(p), _as_array(y)
    per = -(
        y * np.log(np.maximum(p, PROB_EPS))
        + (1.0 - y) * np.log(np.maximum(1.0 - p, PROB_EPS))
    )
    return _reduce(per, reduction)


def p_t(p, y):
    """Probability assigned to the true class: p if y=1 else 1-p."""
    p, y = _as_array(p), _as_array(y)
    out = np.where(y == 1, p, 1.0 - p)
    return float(out) if out.ndim == 0 else out


def focal_loss(p, y, params: LossParams | None = None, reduction: str = "mean"):
    """-alpha_t (1 - p_t)^gamma log(p_t); reduces to weighted cross-entropy
    at gamma = 0 and to exactly 0 at p_t = 1."""
    params = params or LossParams()
    p, y = _as_array(p), _as_array(y)
    pt = np.where(y == 1, p, 1.0 - p)
    at = np.where(y == 1, params.alpha, 1.0 - params.alpha)
    per = -at * (1.0 - pt) ** params.gamma * np.log(np.maximum(pt, PROB_EPS))
    return _reduce(per, reduction)


def loss_gradients(p, y, params: LossParams | None = None, kind: str = "ce"):
    """Closed-form d(per-sample loss)/dp; for smooth_l1 the first argument is
    x and the derivative is taken in x."""
    params = params or LossParams()
    p = _as_array(p)
    if kind == "smooth_l1":
        out = np.where(np.abs(p) < 1.0, p, np.sign(p))
        return float(out) if out.ndim == 0 else out
    y = _as_array(y)
    if kind == "ce":
        out = np.where(y == 1, -1.0 / p, 1.0 / (1.0 - p))
        return float(out) if out.ndim == 0 else out
    if kind == "focal":
        a, g = params.alpha, params.gamma
        if g > 0:
            pos = a * (g * (1.0 - p) ** (g - 1.0) * np.log(p) - (1.0 - p) ** g / p)
            neg = (1.0 - a) * (p**g / (1.0 - p) - g * p ** (g - 1.0) * np.log(1.0 - p))
        else:
            pos = a * (-1.0 / p)
            neg = (1.0 - a) * (1.0 / (1.0 - p))
        out = np.where(y == 1, pos, neg)
        return float(out) if out.ndim == 0 else out
    raise InputError(f"unknown loss kind {kind!r}")


def loss_schedule(epoch: int, params: LossParams | None = None) -> str:
    """Which classification loss an epoch trains with: cross-entropy before
    the switch epoch, focal from it onward."""
    params = params or LossParams()
    if not 0 <= epoch < params.total_epochs:
        raise InputError(
            f"epoch {epoch} outside [0, {params.total_epochs})"
        )
    return "cross_entropy" if epoch < params.schedule_switch_epoch else "focal"


# ---------------------------------------------------------------------------
# Prior assignment
# ---------------------------------------------------------------------------

@dataclass
class MatchResult:
    """Per-prior assignment: label (1 positive / 0 negative / -1 ignore),
    matched ground-truth index (-1 when unmatched), encoded box targets."""

    labels: np.ndarray
    gt_index: np.ndarray
    box_targets: np.ndarray


def match_priors(
    priors: np.ndarray,
    gt_boxes: np.ndarray,
    pos_iou: float = 0.5,
    neg_iou: float = 0.3,
    variances: tuple[float, float] = (0.1, 0.2),
) -> MatchResult:
    """Assign priors to ground-truth boxes for loss evaluation.

    A prior is positive when its best overlap reaches ``pos_iou`` or when it
    is the best prior for some ground truth (a prior claimed by several keeps
    the highest-overlap one); negative below ``neg_iou``; ignored in between.
    ``priors`` are center-form, ``gt_boxes`` corner-form, both normalized.
    """
    p = np.asarray(priors, dtype=np.float32).reshape(-1, 4)
    if p.shape[0] == 0:
        raise InputError("match_priors requires at least one prior")
    gt = np.asarray(gt_boxes, dtype=np.float32).reshape(-1, 4)
    n, m = p.shape[0], gt.shape[0]
    labels = np.full(n, NEGATIVE, dtype=np.int8)
    gt_index = np.full(n, -1, dtype=np.int64)
    targets = np.zeros((n, 4), dtype=np.float32)
    if m == 0:
        return MatchResult(labels, gt_index, targets)

    half = p[:, 2:] / 2
    prior_corners = np.concatenate([p[:, :2] - half, p[:, :2] + half], axis=1)
    overlaps = iou_matrix(prior_corners, gt)  # (n, m)

    best_gt = overlaps.argmax(axis=1)
    best_iou = overlaps[np.arange(n), best_gt]
    labels = np.where(
        best_iou >= pos_iou, POSITIVE, np.where(best_iou < neg_iou, NEGATIVE, IGNORE)
    ).astype(np.int8)
    gt_index = np.where(labels == POSITIVE, best_gt, -1)

    # Every ground truth claims its best prior, even below the thresholds; a
    # prior claimed twice keeps the higher-overlap ground truth (ties keep
    # the earlier one).
    forced = overlaps.argmax(axis=0)
    for g, pi in enumerate(forced):
        cur = gt_index[pi]
        if labels[pi] == POSITIVE and cur >= 0 and overlaps[pi, cur] >= overlaps[pi, g]:
            continue
        labels[pi] = POSITIVE
        gt_index[pi] = g

    pos = labels == POSITIVE
    if np.any(pos):
        targets[pos] = encode_boxes(gt[gt_index[pos]], p[pos], variances)
    return MatchResult(labels, gt_index, targets)
