"""Independent reference implementations used as test oracles.

Everything here recomputes results from first principles (direct definitions,
scalar loops, brute force, finite differences) and stays structurally
independent of the production code paths it checks.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def conv2d_six_loops(x, w, bias=None, stride=1, pad=0):
    """Literal six-nested-loop direct convolution (groups=1), python floats."""
    n, c, h, wd = x.shape
    oc, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    xl, wl = x.tolist(), w.tolist()
    out = np.zeros((n, oc, oh, ow), dtype=np.float64)
    for b in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ic in range(c):
                        for ki in range(kh):
                            yy = i * stride - pad + ki
                            if not 0 <= yy < h:
                                continue
                            for kj in range(kw):
                                xx = j * stride - pad + kj
                                if 0 <= xx < wd:
                                    acc += xl[b][ic][yy][xx] * wl[o][ic][ki][kj]
                    out[b, o, i, j] = acc + (float(bias[o]) if bias is not None else 0.0)
    return out


def conv2d_direct(x, w, bias=None, stride=1, pad=0, groups=1):
    """Patch-sum direct convolution in float64, any group count."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, c, h, wd = x.shape
    oc, icg, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cg, ocg = c // groups, oc // groups
    out = np.zeros((n, oc, oh, ow), dtype=np.float64)
    for b in range(n):
        for o in range(oc):
            g = o // ocg
            for i in range(oh):
                for j in range(ow):
                    patch = xp[
                        b,
                        g * cg : g * cg + icg,
                        i * stride : i * stride + kh,
                        j * stride : j * stride + kw,
                    ]
                    out[b, o, i, j] = float((patch * w[o]).sum())
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64).reshape(1, oc, 1, 1)
    return out


# ---------------------------------------------------------------------------
# Bilinear sampling / deformable convolution
# ---------------------------------------------------------------------------

def bilinear_at(plane, px, py):
    """Scalar 4-neighbor blend on a 2-d array; zero outside the map."""
    h, w = plane.shape
    x0, y0 = math.floor(px), math.floor(py)
    fx, fy = px - x0, py - y0
    total = 0.0
    for (ix, iy), wt in (
        ((x0, y0), (1 - fx) * (1 - fy)),
        ((x0 + 1, y0), fx * (1 - fy)),
        ((x0, y0 + 1), (1 - fx) * fy),
        ((x0 + 1, y0 + 1), fx * fy),
    ):
        if 0 <= ix < w and 0 <= iy < h:
            total += wt * float(plane[iy, ix])
    return total


def deform_conv2d_scalar(x, w, offsets, stride=1, pad=0):
    """Gather-then-dot deformable convolution, one scalar sample at a time."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    n, c, h, wd = x.shape
    oc, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, oc, oh, ow), dtype=np.float64)
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                gathered = np.zeros((c, kh * kw), dtype=np.float64)
                for t in range(kh * kw):
                    ki, kj = divmod(t, kw)
                    sy = i * stride - pad + ki + offsets[b, 2 * t, i, j]
                    sx = j * stride - pad + kj + offsets[b, 2 * t + 1, i, j]
                    for ch in range(c):
                        gathered[ch, t] = bilinear_at(x[b, ch], sx, sy)
                for o in range(oc):
                    out[b, o, i, j] = float((gathered * w[o].reshape(c, kh * kw)).sum())
    return out


# ---------------------------------------------------------------------------
# Boxes
# ---------------------------------------------------------------------------

def iou_scalar(a, b):
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = max(0.0, a[2] - a[0]) * max(0.0, a[3] - a[1])
    area_b = max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def nms_brute_force(boxes, scores, thresh):
    """O(n^2) greedy suppression; returns kept indices in keep order."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    kept = []
    suppressed = set()
    for i in order:
        if i in suppressed:
            continue
        kept.append(i)
        for j in order:
            if j not in suppressed and j != i:
                if iou_scalar(boxes[i], boxes[j]) > thresh:
                    suppressed.add(j)
    return kept


def encode_reference(gt_corner, prior_center, variances=(0.1, 0.2)):
    """Inverse of the box decode, written scalar-wise in float64."""
    out = []
    for (x1, y1, x2, y2), (pcx, pcy, pw, ph) in zip(gt_corner, prior_center):
        gcx, gcy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
        gw, gh = x2 - x1, y2 - y1
        out.append(
            [
                (gcx - pcx) / (variances[0] * pw),
                (gcy - pcy) / (variances[0] * ph),
                math.log(gw / pw) / variances[1],
                math.log(gh / ph) / variances[1],
            ]
        )
    return np.array(out, dtype=np.float64).reshape(-1, 4)


def encode_landmarks_reference(points, prior_center, variances=(0.1, 0.2)):
    """Inverse of the landmark decode: (n, 5, 2) points -> (n, 10) deltas."""
    out = np.zeros((len(prior_center), 10), dtype=np.float64)
    for r, ((pcx, pcy, pw, ph), pts) in enumerate(zip(prior_center, points)):
        for k, (px, py) in enumerate(pts):
            out[r, 2 * k] = (px - pcx) / (variances[0] * pw)
            out[r, 2 * k + 1] = (py - pcy) / (variances[0] * ph)
    return out


# ---------------------------------------------------------------------------
# Matching and average precision
# ---------------------------------------------------------------------------

def match_priors_brute(prior_corners, gts, pos_iou, neg_iou):
    """Label priors from an explicitly built IoU table.

    Rules: positive when best overlap >= pos_iou or when the prior is some
    ground truth's best prior (a doubly claimed prior keeps the higher
    overlap, ties keep the earlier ground truth); negative below neg_iou;
    ignore otherwise.
    """
    n, m = len(prior_corners), len(gts)
    table = [[iou_scalar(prior_corners[i], gts[g]) for g in range(m)] for i in range(n)]
    labels = [0] * n
    matched = [-1] * n
    if m == 0:
        return labels, matched
    for i in range(n):
        best = max(range(m), key=lambda g: table[i][g])
        if table[i][best] >= pos_iou:
            labels[i] = 1
            matched[i] = best
        elif table[i][best] < neg_iou:
            labels[i] = 0
        else:
            labels[i] = -1
    for g in range(m):
        best_prior = max(range(n), key=lambda i: table[i][g])
        cur = matched[best_prior]
        if labels[best_prior] == 1 and cur >= 0 and table[best_prior][cur] >= table[best_prior][g]:
            continue
        labels[best_prior] = 1
        matched[best_prior] = g
    return labels, matched


def match_detections_reference(boxes, scores, gts, thresh):
    """Greedy TP flags from an explicit IoU table, highest unmatched first."""
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    flags = [False] * len(scores)
    used = set()
    for i in order:
        best_g, best_v = -1, -1.0
        for g in range(len(gts)):
            if g in used:
                continue
            v = iou_scalar(boxes[i], gts[g])
            if v > best_v:
                best_g, best_v = g, v
        if best_g >= 0 and best_v >= thresh:
            flags[i] = True
            used.add(best_g)
    return flags


def ap_reference(scores, flags, total_gt):
    """All-point interpolated AP by explicit precision/recall enumeration."""
    if total_gt == 0:
        return None
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    tp = fp = 0
    points = []  # (recall, precision)
    for i in order:
        if flags[i]:
            tp += 1
        else:
            fp += 1
        points.append((tp / total_gt, tp / (tp + fp)))
    ap = 0.0
    prev_r = 0.0
    for idx, (r, _) in enumerate(points):
        if r > prev_r:
            best_p = max(p for rr, p in points[idx:])
            ap += (r - prev_r) * best_p
            prev_r = r
    return ap


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

def central_diff(fn, x, h=1e-4):
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


# ---------------------------------------------------------------------------
# Architecture shape enumeration
# ---------------------------------------------------------------------------

# Independent transcription of the backbone row table:
# (expansion, out_c, k_size, stride, activation, use_se, tap)
TABLE_ROWS = [
    (1, 16, 3, 1, "RE", 0, None),
    (6, 24, 5, 2, "RE", 0, None),
    (3, 24, 7, 1, "RE", 1, None),
    (6, 40, 3, 2, "RE", 1, None),
    (6, 40, 3, 1, "RE", 0, None),
    (3, 40, 5, 1, "RE", 1, "stage1"),
    (6, 80, 7, 2, "HS", 1, None),
    (6, 80, 3, 1, "HS", 0, None),
    (6, 80, 3, 1, "HS", 1, None),
    (3, 80, 5, 1, "HS", 1, None),
    (6, 112, 7, 1, "HS", 0, None),
    (3, 112, 7, 1, "HS", 1, "stage2"),
    (6, 160, 5, 2, "HS", 1, None),
    (6, 160, 5, 1, "HS", 1, None),
    (3, 160, 5, 1, "HS", 1, "stage3"),
]


def expected_detector_shapes(neck_c=64, anchors=2):
    """Recompute every weight-tensor shape of the full detector."""
    shapes: dict[str, tuple] = {}

    def bn(prefix, ch):
        for part in ("gamma", "beta", "mean", "var"):
            shapes[f"{prefix}.{part}"] = (ch,)

    shapes["backbone.stem.conv.weight"] = (16, 3, 3, 3)
    bn("backbone.stem.bn", 16)
    in_c = 16
    for idx, (exp, out_c, k, _stride, _act, se, _tap) in enumerate(TABLE_ROWS, start=1):
        base = f"backbone.block{idx}"
        hidden = in_c * exp
        if exp != 1:
            shapes[f"{base}.expand.conv.weight"] = (hidden, in_c, 1, 1)
            bn(f"{base}.expand.bn", hidden)
        shapes[f"{base}.depthwise.conv.weight"] = (hidden, 1, k, k)
        bn(f"{base}.depthwise.bn", hidden)
        if se:
            red = max(1, hidden // 4)
            shapes[f"{base}.se.fc1.weight"] = (red, hidden, 1, 1)
            shapes[f"{base}.se.fc1.bias"] = (red,)
            shapes[f"{base}.se.fc2.weight"] = (hidden, red, 1, 1)
            shapes[f"{base}.se.fc2.bias"] = (hidden,)
        shapes[f"{base}.project.conv.weight"] = (out_c, hidden, 1, 1)
        bn(f"{base}.project.bn", out_c)
        in_c = out_c

    taps = [out_c for (_e, out_c, _k, _s, _a, _se, tap) in TABLE_ROWS if tap]
    for idx, ch in enumerate(taps, start=1):
        shapes[f"fpn.lateral{idx}.conv.weight"] = (neck_c, ch, 1, 1)
        bn(f"fpn.lateral{idx}.bn", neck_c)
    for idx in (1, 2):
        shapes[f"fpn.smooth{idx}.conv.weight"] = (neck_c, neck_c, 3, 3)
        bn(f"fpn.smooth{idx}.bn", neck_c)

    branch_widths = {
        "a1": (neck_c // 2, neck_c),
        "b1": (neck_c // 4, neck_c),
        "b2": (neck_c // 4, neck_c // 4),
        "c1": (neck_c // 4, neck_c),
        "c2": (neck_c // 4, neck_c // 4),
        "c3": (neck_c // 4, neck_c // 4),
    }
    for idx in (1, 2, 3):
        for leaf, (out_c, in_ch) in branch_widths.items():
            base = f"ssh{idx}.{leaf}"
            shapes[f"{base}.offset.weight"] = (18, in_ch, 3, 3)
            shapes[f"{base}.offset.bias"] = (18,)
            shapes[f"{base}.conv.weight"] = (out_c, in_ch, 3, 3)
            bn(f"{base}.bn", out_c)

    for idx in (1, 2, 3):
        for head, width in (("cls", 2), ("box", 4), ("landmark", 10)):
            shapes[f"head{idx}.{head}.weight"] = (anchors * width, neck_c, 1, 1)
            shapes[f"head{idx}.{head}.bias"] = (anchors * width,)
    return shapes
