"""Feature-pyramid fusion, context modules with deformable branches, and the
per-anchor prediction heads.

All pyramid levels share ``NECK_CHANNELS`` channels; adjacent levels are
fused top-down by bilinear upsampling and elementwise summing, each sum
followed by a 3x3 smoothing conv. The context module runs three parallel
deformable-conv branches of depth 1 / 2 / 3 and concatenates them.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .dcn import dcn_layer
from .errors import DimensionError, InputError
from .ops import batch_norm_infer, bilinear_upsample, conv2d, leaky_relu, relu
from .tensor import ConvParams, Tensor, as_nchw
from .weights import WeightSpec, WeightStore, bn_specs, conv_bn_specs

NECK_CHANNELS = 64
NECK_SLOPE = 0.1
ANCHORS_PER_POSITION = 2

HEAD_WIDTHS = (("cls", 2), ("box", 4), ("landmark", 10))


class PyramidLevels(NamedTuple):
    """Three equal-channel feature maps, finest (stride 8) first."""

    p1: Tensor
    p2: Tensor
    p3: Tensor


class RawPredictions(NamedTuple):
    """Flattened per-anchor head outputs for a single image.

    Rows are ordered level-major, then row-major over feature positions,
    then anchor index; this matches prior-box generation order exactly.
    """

    class_logits: np.ndarray  # (total_anchors, 2)
    box_deltas: np.ndarray  # (total_anchors, 4)
    landmark_deltas: np.ndarray  # (total_anchors, 10)


def _conv_bn_act(x, w: WeightStore, prefix: str, params: ConvParams) -> Tensor:
    y = conv2d(x, w.get(f"{prefix}.conv.weight"), None, params)
    y = batch_norm_infer(
        y,
        w.get(f"{prefix}.bn.gamma"),
        w.get(f"{prefix}.bn.beta"),
        w.get(f"{prefix}.bn.mean"),
        w.get(f"{prefix}.bn.var"),
    )
    return leaky_relu(y, NECK_SLOPE)


def lateral_project(ci: Tensor, w: WeightStore, prefix: str) -> Tensor:
    """1x1-project a backbone tap to the shared neck width."""
    return _conv_bn_act(ci, w, prefix, ConvParams())


def fpn_fuse(c1p: Tensor, c2p: Tensor, c3p: Tensor, w: WeightStore) -> PyramidLevels:
    """Top-down fusion: upsample the coarser level, sum, then smooth."""
    c1p, c2p, c3p = as_nchw(c1p), as_nchw(c2p), as_nchw(c3p)
    if not (c1p.shape[1] == c2p.shape[1] == c3p.shape[1]):
        raise DimensionError(
            "projected levels must share a channel count, got "
            f"{c1p.shape[1]}/{c2p.shape[1]}/{c3p.shape[1]}"
        )
    k3 = c3p
    k2 = _conv_bn_act(
        c2p + bilinear_upsample(k3, *c2p.shape[2:]), w, "fpn.smooth2",
        ConvParams(padding=1),
    )
    k1 = _conv_bn_act(
        c1p + bilinear_upsample(k2, *c1p.shape[2:]), w, "fpn.smooth1",
        ConvParams(padding=1),
    )
    return PyramidLevels(k1, k2, k3)


def ssh_context(ki: Tensor, w: WeightStore, prefix: str) -> Tensor:
    """Concatenate receptive-field branches of one, two and three 3x3
    deformable convs (widths C/2, C/4, C/4), then ReLU."""
    a = dcn_layer(ki, w, f"{prefix}.a1")
    b = dcn_layer(dcn_layer(ki, w, f"{prefix}.b1"), w, f"{prefix}.b2")
    c = dcn_layer(
        dcn_layer(dcn_layer(ki, w, f"{prefix}.c1"), w, f"{prefix}.c2"),
        w,
        f"{prefix}.c3",
    )
    return relu(np.concatenate([a, b, c], axis=1))


def predict_heads(
    levels: PyramidLevels,
    w: WeightStore,
    anchors_per_pos: int = ANCHORS_PER_POSITION,
) -> RawPredictions:
    """Apply the per-level 1x1 prediction convs and flatten to anchor rows."""
    flat: dict[str, list[np.ndarray]] = {name: [] for name, _ in HEAD_WIDTHS}
    for idx, level in enumerate(levels, start=1):
        level = as_nchw(level)
        if level.shape[0] != 1:
            raise InputError("head flattening expects a single-image batch")
        for name, width in HEAD_WIDTHS:
            y = conv2d(
                level,
                w.get(f"head{idx}.{name}.weight"),
                w.get(f"head{idx}.{name}.bias"),
            )
            n, ch, h, wd = y.shape
            if ch != anchors_per_pos * width:
                raise DimensionError(
                    f"head{idx}.{name} produced {ch} channels, expected "
                    f"{anchors_per_pos * width}"
                )
            flat[name].append(
                np.ascontiguousarray(y.transpose(0, 2, 3, 1)).reshape(
                    h * wd * anchors_per_pos, width
                )
            )
    return RawPredictions(
        class_logits=np.concatenate(flat["cls"], axis=0),
        box_deltas=np.concatenate(flat["box"], axis=0),
        landmark_deltas=np.concatenate(flat["landmark"], axis=0),
    )


# ---------------------------------------------------------------------------
# Architecture walk
# ---------------------------------------------------------------------------

def _dcn_specs(prefix: str, out_c: int, in_c: int) -> list[WeightSpec]:
    return [
        WeightSpec(f"{prefix}.offset.weight", (18, in_c, 3, 3), "zeros"),
        WeightSpec(f"{prefix}.offset.bias", (18,), "zeros"),
        WeightSpec(f"{prefix}.conv.weight", (out_c, in_c, 3, 3), "fan_in"),
        *bn_specs(f"{prefix}.bn", out_c),
    ]


def architecture(
    tap_channels: tuple[int, int, int],
    neck_c: int = NECK_CHANNELS,
    anchors_per_pos: int = ANCHORS_PER_POSITION,
) -> list[WeightSpec]:
    """Enumerate lateral, smoothing, context and head tensors in forward order."""
    specs: list[WeightSpec] = []
    for idx, ch in enumerate(tap_channels, start=1):
        specs += conv_bn_specs(f"fpn.lateral{idx}", neck_c, ch, 1)
    for idx in (1, 2):
        specs += conv_bn_specs(f"fpn.smooth{idx}", neck_c, neck_c, 3)
    half, quarter = neck_c // 2, neck_c // 4
    for idx in (1, 2, 3):
        base = f"ssh{idx}"
        specs += _dcn_specs(f"{base}.a1", half, neck_c)
        specs += _dcn_specs(f"{base}.b1", quarter, neck_c)
        specs += _dcn_specs(f"{base}.b2", quarter, quarter)
        specs += _dcn_specs(f"{base}.c1", quarter, neck_c)
        specs += _dcn_specs(f"{base}.c2", quarter, quarter)
        specs += _dcn_specs(f"{base}.c3", quarter, quarter)
    for idx in (1, 2, 3):
        for name, width in HEAD_WIDTHS:
            out = anchors_per_pos * width
            specs += [
                WeightSpec(f"head{idx}.{name}.weight", (out, neck_c, 1, 1), "fan_in"),
                WeightSpec(f"head{idx}.{name}.bias", (out,), "zeros"),
            ]
    return specs
