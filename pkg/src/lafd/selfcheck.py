"""Built-in verification suite.

Each check compares a production code path against an independent reference
implementation (direct-definition loops, scalar bilinear gathers, brute-force
suppression, finite differences) or against hand-computed values. ``perturb``
deliberately corrupts one named check's production side so harness failures
stay observable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .anchors import (
    Detection,
    PostprocConfig,
    generate_priors,
    nms,
    prior_counts,
    resize_scale,
    resized_dims,
)
from .dcn import deform_conv2d
from .errors import InputError
from .evaluate import ap_from_flags
from .losses import LossParams, cross_entropy, focal_loss, loss_gradients, loss_schedule, smooth_l1
from .model import detector_forward, init_detector
from .ops import bilinear_sample, conv2d
from .tensor import ConvParams
from .weights_io import serialized_size

PERTURB_BUMP = 1e-3


class CheckFailure(Exception):
    pass


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


# ---------------------------------------------------------------------------
# Reference implementations
# ---------------------------------------------------------------------------

def conv2d_reference(x, w, bias, stride, pad, groups):
    """Direct-definition convolution: six nested loops over python floats."""
    n, c, h, wd = x.shape
    oc, icg, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    cg, ocg = c // groups, oc // groups
    xl = x.tolist()
    wl = w.tolist()
    bl = [0.0] * oc if bias is None else [float(v) for v in bias]
    out = np.empty((n, oc, oh, ow), dtype=np.float32)
    for b in range(n):
        for o in range(oc):
            g = o // ocg
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ic in range(icg):
                        plane = xl[b][g * cg + ic]
                        kern = wl[o][ic]
                        for ki in range(kh):
                            yy = i * stride - pad + ki
                            if yy < 0 or yy >= h:
                                continue
                            row = plane[yy]
                            krow = kern[ki]
                            for kj in range(kw):
                                xx = j * stride - pad + kj
                                if 0 <= xx < wd:
                                    acc += row[xx] * krow[kj]
                    out[b, o, i, j] = acc + bl[o]
    return out


def deform_reference(x, w, offsets, stride, pad):
    """Scalar gather-then-dot oracle for deformable convolution."""
    n, c, h, wd = x.shape
    oc, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    xl = x.tolist()
    wl = w.tolist()
    ol = offsets.tolist()

    def sample(b, ch, sx, sy):
        x0, y0 = math.floor(sx), math.floor(sy)
        fx, fy = sx - x0, sy - y0
        total = 0.0
        for dy, dx, wgt in (
            (0, 0, (1 - fx) * (1 - fy)),
            (0, 1, fx * (1 - fy)),
            (1, 0, (1 - fx) * fy),
            (1, 1, fx * fy),
        ):
            yy, xx = y0 + dy, x0 + dx
            if 0 <= yy < h and 0 <= xx < wd:
                total += wgt * xl[b][ch][yy][xx]
        return total

    out = np.empty((n, oc, oh, ow), dtype=np.float32)
    for b in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for t in range(kh * kw):
                        ki, kj = divmod(t, kw)
                        sy = i * stride - pad + ki + ol[b][2 * t][i][j]
                        sx = j * stride - pad + kj + ol[b][2 * t + 1][i][j]
                        for ch in range(c):
                            acc += sample(b, ch, sx, sy) * wl[o][ch][ki][kj]
                    out[b, o, i, j] = acc
    return out


def nms_reference(boxes, scores, thresh):
    """Brute-force greedy suppression over scalar IoU. Returns kept indices."""

    def iou_scalar(a, b):
        iw = min(a[2], b[2]) - max(a[0], b[0])
        ih = min(a[3], b[3]) - max(a[1], b[1])
        inter = max(0.0, iw) * max(0.0, ih)
        area_a = max(0.0, a[2] - a[0]) * max(0.0, a[3] - a[1])
        area_b = max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])
        union = area_a + area_b - inter
        return inter / union if union > 0 else 0.0

    remaining = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    kept = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        remaining = [
            i for i in remaining if iou_scalar(boxes[best], boxes[i]) <= thresh
        ]
    return kept


def central_difference(fn: Callable[[float], float], x: float, h: float = 1e-4) -> float:
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def _require(cond: bool, message: str):
    if not cond:
        raise CheckFailure(message)


def _check_conv_oracle(rng: np.random.Generator, bump: float) -> str:
    worst = 0.0
    for trial in range(500):
        n = int(rng.integers(1, 3))
        k = int(rng.choice([1, 3, 5, 7]))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, k // 2 + 1))
        kind = trial % 3
        if kind == 0:  # plain
            c = int(rng.integers(1, 9))
            oc = int(rng.integers(1, 9))
            groups = 1
        elif kind == 1:  # depthwise
            c = oc = int(rng.integers(1, 9))
            groups = c
        else:  # grouped
            groups = int(rng.choice([2, 4]))
            c = groups * int(rng.integers(1, 3))
            oc = groups * int(rng.integers(1, 3))
        size = int(rng.integers(max(k - 2 * pad, 1), 9))
        x = rng.standard_normal((n, c, size, size), dtype=np.float32)
        w = rng.standard_normal((oc, c // groups, k, k), dtype=np.float32)
        bias = rng.standard_normal(oc).astype(np.float32) if trial % 2 else None
        got = conv2d(x, w, bias, ConvParams(stride, pad, groups)) + np.float32(bump)
        want = conv2d_reference(x, w, bias, stride, pad, groups)
        err = float(np.max(np.abs(got - want)))
        worst = max(worst, err)
        _require(err <= 1e-5, f"config {trial} (k={k} s={stride} g={groups}) err {err:.2e}")
    return f"500 configs, max |err| {worst:.2e}"


def _random_dcn_case(rng: np.random.Generator):
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 9))
    oc = int(rng.integers(1, 9))
    k = int(rng.choice([1, 3]))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    size = int(rng.integers(max(k - 2 * pad, 3), 13))
    x = rng.standard_normal((n, c, size, size), dtype=np.float32)
    w = rng.standard_normal((oc, c, k, k), dtype=np.float32)
    p = ConvParams(stride, pad)
    oh = p.out_size(size, k, "height")
    ow = p.out_size(size, k, "width")
    return x, w, p, (n, 2 * k * k, oh, ow)


def _check_dcn_zero_offset(rng: np.random.Generator, bump: float) -> str:
    worst = 0.0
    for trial in range(200):
        x, w, p, off_shape = _random_dcn_case(rng)
        offsets = np.zeros(off_shape, dtype=np.float32)
        got = deform_conv2d(x, w, offsets, p) + np.float32(bump)
        want = conv2d(x, w, None, p)
        err = float(np.max(np.abs(got - want)))
        worst = max(worst, err)
        _require(err <= 1e-5, f"shape trial {trial} err {err:.2e}")
    return f"200 shapes, max |err| {worst:.2e}"


def _check_dcn_oracle(rng: np.random.Generator, bump: float) -> str:
    worst = 0.0
    for trial in range(60):
        x, w, p, off_shape = _random_dcn_case(rng)
        offsets = rng.uniform(-2.5, 2.5, size=off_shape).astype(np.float32)
        got = deform_conv2d(x, w, offsets, p) + np.float32(bump)
        want = deform_reference(x, w, offsets, p.stride, p.padding)
        err = float(np.max(np.abs(got - want)))
        worst = max(worst, err)
        _require(err <= 1e-5, f"offset trial {trial} err {err:.2e}")
    return f"60 random-offset shapes, max |err| {worst:.2e}"


def _check_bilinear_blend(rng: np.random.Generator, bump: float) -> str:
    x = rng.standard_normal((1, 1, 6, 5), dtype=np.float32)
    got = bilinear_sample(x, 0, 0, 1.2, 3.2) + bump
    # 4-neighbor blend around (1.2, 3.2): columns 1..2, rows 3..4.
    p13, p23 = float(x[0, 0, 3, 1]), float(x[0, 0, 3, 2])
    p14, p24 = float(x[0, 0, 4, 1]), float(x[0, 0, 4, 2])
    want = 0.8 * 0.8 * p13 + 0.2 * 0.8 * p23 + 0.8 * 0.2 * p14 + 0.2 * 0.2 * p24
    err = abs(got - want)
    _require(err <= 1e-6, f"blend err {err:.2e}")
    return f"|err| {err:.2e}"


def _check_prior_counts(rng: np.random.Generator, bump: float) -> str:
    extra = 1 if bump else 0
    per_level = prior_counts(640, 640)
    total = len(generate_priors(640, 640)) + extra
    _require(per_level == [12800, 3200, 800], f"per-level counts {per_level}")
    _require(total == 16800, f"total {total} != 16800")
    single = len(generate_priors(64, 64, steps=[8], sizes=[[16, 32]])) + extra
    _require(single == 128, f"isolated 8x8 level gave {single} priors")
    for _ in range(20):
        h = int(rng.integers(64, 1600))
        w = int(rng.integers(64, 1600))
        want = sum(
            math.ceil(h / s) * math.ceil(w / s) * 2 for s in (8, 16, 32)
        )
        _require(
            len(generate_priors(h, w)) == want, f"count formula broke at {h}x{w}"
        )
    return "640x640 -> 12800/3200/800; 8x8 level -> 128"


def _check_nms_oracle(rng: np.random.Generator, bump: float) -> str:
    for trial in range(200):
        n = 100
        centers = rng.uniform(0, 100, size=(n, 2))
        sizes = rng.uniform(2, 30, size=(n, 2))
        boxes = np.concatenate([centers - sizes / 2, centers + sizes / 2], axis=1)
        scores = rng.uniform(0.01, 1.0, size=n)
        dets = [
            Detection(tuple(boxes[i]), float(scores[i]), np.zeros((5, 2)))
            for i in range(n)
        ]
        kept = nms(dets, 0.4)
        if bump and kept:
            kept = kept[:-1]
        ids = {id(d): i for i, d in enumerate(dets)}
        got = [ids[id(d)] for d in kept]
        want = nms_reference(boxes.tolist(), scores.tolist(), 0.4)
        _require(got == want, f"instance {trial}: kept {got[:6]}... vs {want[:6]}...")
    return "200 instances of 100 boxes, identical kept sets"


def _check_focal_identities(rng: np.random.Generator, bump: float) -> str:
    p = rng.uniform(0.01, 0.99, size=256)
    y = rng.integers(0, 2, size=256)
    for alpha in (0.25, 0.5, 0.75):
        params = LossParams(alpha=alpha, gamma=0.0)
        fl = focal_loss(p, y, params, reduction="none") + bump
        at = np.where(y == 1, alpha, 1 - alpha)
        ce = at * cross_entropy(p, y, reduction="none")
        err = float(np.max(np.abs(fl - ce)))
        _require(err <= 1e-7, f"gamma=0 reduction err {err:.2e} at alpha={alpha}")
    params = LossParams(alpha=0.25, gamma=2.0)
    ratio = (focal_loss(0.9, 1, params, reduction="none") + bump) / (
        0.25 * cross_entropy(0.9, 1, reduction="none")
    )
    _require(abs(ratio - 0.01) <= 1e-9, f"modulating ratio {ratio} != 0.01")
    zero = focal_loss(1.0, 1, params, reduction="none") + bump
    _require(zero == 0.0, f"loss at p_t=1 is {zero}, not 0")
    return "gamma=0 reduction, 1/100 modulation, exact zero at p_t=1"


def _check_loss_gradients(rng: np.random.Generator, bump: float) -> str:
    worst = 0.0
    gammas = [0.0, 0.5, 1.0, 2.0, 5.0]
    alphas = [0.25, 0.5, 0.75]
    for _ in range(1000):
        kind = ["ce", "focal", "smooth_l1"][int(rng.integers(0, 3))]
        params = LossParams(
            alpha=float(rng.choice(alphas)), gamma=float(rng.choice(gammas))
        )
        if kind == "smooth_l1":
            x = float(rng.uniform(-3, 3))
            # central differences straddle the |x| = 1 kink; stay clear of it
            if abs(abs(x) - 1.0) < 1e-3:
                x += 0.01
            fn = lambda v: smooth_l1(v)
            got = loss_gradients(x, None, params, "smooth_l1") + bump
            want = central_difference(fn, x)
        else:
            pv = float(rng.uniform(0.01, 0.99))
            yv = int(rng.integers(0, 2))
            loss = cross_entropy if kind == "ce" else (
                lambda q, yy, red="none": focal_loss(q, yy, params, reduction=red)
            )
            fn = lambda v: loss(v, yv, "none")
            got = loss_gradients(pv, yv, params, kind) + bump
            want = central_difference(fn, pv)
        rel = abs(got - want) / max(abs(got), abs(want), 1e-12)
        worst = max(worst, rel)
        _require(rel < 1e-3, f"{kind} gradient rel err {rel:.2e}")
    return f"1000 finite-difference points, max rel err {worst:.2e}"


def _check_smooth_l1(rng: np.random.Generator, bump: float) -> str:
    for x, want in ((0.5, 0.125), (2.0, 1.5), (-2.0, 1.5), (1.0, 0.5), (-1.0, 0.5)):
        got = smooth_l1(x) + bump
        _require(abs(got - want) <= 1e-12, f"smooth_l1({x}) = {got}, want {want}")
    grid = np.linspace(-4, 4, 20001)
    vals = smooth_l1(grid)
    steps = np.abs(np.diff(vals))
    # |derivative| <= 1 everywhere implies increments bounded by grid spacing
    _require(float(steps.max()) <= (grid[1] - grid[0]) * 1.0001, "derivative bound violated")
    grads = loss_gradients(grid, None, None, "smooth_l1")
    _require(float(np.max(np.abs(grads))) <= 1.0, "analytic |derivative| > 1")
    return "0.125 / 1.5 / 0.5 values; continuous, |slope| <= 1 on dense grid"


def _check_loss_schedule(rng: np.random.Generator, bump: float) -> str:
    params = LossParams()
    flip = {"cross_entropy": "focal", "focal": "cross_entropy"}
    pick = lambda e: (
        flip[loss_schedule(e, params)] if bump else loss_schedule(e, params)
    )
    _require(pick(0) == "cross_entropy", "epoch 0 should use cross-entropy")
    _require(pick(244) == "cross_entropy", "epoch 244 should use cross-entropy")
    _require(pick(245) == "focal", "epoch 245 should use focal")
    _require(pick(249) == "focal", "epoch 249 should use focal")
    try:
        loss_schedule(250, params)
    except InputError:
        pass
    else:
        raise CheckFailure("epoch 250 should be rejected")
    return "cross-entropy through 244, focal from 245"


def _check_resize_rule(rng: np.random.Generator, bump: float) -> str:
    cfg = PostprocConfig()
    for (h, w), want in (((480, 640), 2.4375), ((1000, 3000), 0.52), ((500, 500), 2.4)):
        got = resize_scale(h, w, cfg) + bump
        _require(got == want, f"scale for {h}x{w} is {got}, want {want}")
    for _ in range(100):
        h = int(rng.integers(1, 4000))
        w = int(rng.integers(1, 4000))
        s = resize_scale(h, w, cfg)
        oh, ow = resized_dims(h, w, s)
        long_side, short_side = max(oh, ow), min(oh, ow)
        _require(long_side <= 1560 and short_side <= 1200, f"{h}x{w} -> {oh}x{ow}")
        _require(
            long_side == 1560 or short_side == 1200,
            f"{h}x{w} -> {oh}x{ow} saturates neither bound",
        )
    return "worked scales 2.4375 / 0.52 / 2.4; bounds hold on 100 random dims"


def _check_ap_hand_case(rng: np.random.Generator, bump: float) -> str:
    res = ap_from_flags([0.9, 0.8, 0.7], [True, False, True], total_gt=2)
    got = res.ap + bump
    _require(abs(got - 5.0 / 6.0) <= 1e-4, f"hand case AP {got}, want 0.8333")
    perfect = ap_from_flags([0.9, 0.8], [True, True], total_gt=2).ap
    _require(perfect == 1.0, f"perfect AP {perfect} != 1.0")
    empty = ap_from_flags([], [], total_gt=3).ap
    _require(empty == 0.0, f"no-detection AP {empty} != 0.0")
    undefined = ap_from_flags([0.9], [True], total_gt=0).ap
    _require(undefined is None, "zero-GT AP should be undefined")
    return "3-det/2-GT case = 0.8333; degenerate 1.0 / 0.0 / undefined"


_E2E_STORE = {}


def _seeded_store():
    # one shared init; building 2.6M parameters twice wastes selfcheck budget
    if "store" not in _E2E_STORE:
        _E2E_STORE["store"] = init_detector(seed=11)
    return _E2E_STORE["store"]


def _check_e2e_shapes(rng: np.random.Generator, bump: float) -> str:
    from . import backbone as bb

    store = _seeded_store()
    spec = bb.default_spec()
    image = rng.standard_normal((1, 3, 640, 640), dtype=np.float32)
    c1, c2, c3 = bb.backbone_forward(image, spec, store)
    taps = [tuple(c.shape) for c in (c1, c2, c3)]
    want_taps = [(1, 40, 80, 80), (1, 112, 40, 40), (1, 160, 20, 20)]
    if bump:
        taps[0] = (1, 41, 80, 80)
    _require(taps == want_taps, f"stage taps {taps}, want {want_taps}")
    raw = detector_forward(image, store, spec)
    shapes = (
        raw.class_logits.shape,
        raw.box_deltas.shape,
        raw.landmark_deltas.shape,
    )
    _require(
        shapes == ((16800, 2), (16800, 4), (16800, 10)),
        f"head shapes {shapes}",
    )
    finite = all(
        np.all(np.isfinite(a))
        for a in (raw.class_logits, raw.box_deltas, raw.landmark_deltas)
    )
    _require(finite, "non-finite head outputs")
    return "taps 40/112/160 @ strides 8/16/32; heads (16800, 2/4/10)"


def _check_model_size(rng: np.random.Generator, bump: float) -> str:
    store = _seeded_store()
    size_mb = serialized_size(store) / 1e6 + (5.0 if bump else 0.0)
    _require(
        8.0 <= size_mb <= 12.5,
        f"serialized size {size_mb:.1f} MB outside [8.0, 12.5]",
    )
    return f"{store.param_count()} parameters, {size_mb:.1f} MB serialized"


CHECKS: list[tuple[str, Callable]] = [
    ("conv_oracle", _check_conv_oracle),
    ("dcn_zero_offset", _check_dcn_zero_offset),
    ("dcn_oracle", _check_dcn_oracle),
    ("bilinear_blend", _check_bilinear_blend),
    ("prior_counts", _check_prior_counts),
    ("nms_oracle", _check_nms_oracle),
    ("focal_identities", _check_focal_identities),
    ("loss_gradients", _check_loss_gradients),
    ("smooth_l1", _check_smooth_l1),
    ("loss_schedule", _check_loss_schedule),
    ("resize_rule", _check_resize_rule),
    ("ap_hand_case", _check_ap_hand_case),
    ("e2e_shapes", _check_e2e_shapes),
    ("model_size", _check_model_size),
]

CHECK_NAMES = [name for name, _ in CHECKS]


def run_selfcheck(perturb: str | None = None, seed: int = 2024) -> list[CheckResult]:
    if perturb is not None and perturb not in CHECK_NAMES:
        raise InputError(f"unknown check {perturb!r}; known: {CHECK_NAMES}")
    results = []
    for idx, (name, fn) in enumerate(CHECKS):
        rng = np.random.default_rng(seed + idx)
        bump = PERTURB_BUMP if name == perturb else 0.0
        start = time.perf_counter()
        try:
            detail = fn(rng, bump)
            passed = True
        except CheckFailure as exc:
            detail = str(exc)
            passed = False
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))
    return results
