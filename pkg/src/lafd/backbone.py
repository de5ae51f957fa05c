"""MobileNetV3-style backbone built declaratively from a row table.

The network is a 3x3 stem followed by inverted-residual bottlenecks; three
rows are tagged as stage taps and exported to the detection neck at strides
8 / 16 / 32 with 40 / 112 / 160 channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .ops import batch_norm_infer, conv2d, global_avg_pool, h_sigmoid, h_swish, relu
from .tensor import ConvParams, Tensor, as_nchw
from .weights import WeightSpec, WeightStore, bn_specs, conv_bn_specs, init_store

SE_REDUCTION = 4


@dataclass(frozen=True)
class BottleneckSpec:
    """One inverted-residual row: expansion multiplier (applied to the row's
    input channel count), output channels, depthwise kernel size, stride,
    activation, squeeze-excite flag, and optional stage tap."""

    expansion: int
    out_c: int
    k_size: int
    stride: int
    activation: str  # "RE" | "HS"
    use_se: bool
    stage_tap: str | None = None

    def __post_init__(self):
        if self.k_size % 2 == 0 or self.k_size not in (3, 5, 7):
            raise DimensionError(f"kernel size must be odd in {{3,5,7}}, got {self.k_size}")
        if self.expansion not in (1, 3, 6):
            raise DimensionError(f"expansion must be 1, 3 or 6, got {self.expansion}")
        if self.stride not in (1, 2):
            raise DimensionError(f"stride must be 1 or 2, got {self.stride}")
        if self.activation not in ("RE", "HS"):
            raise DimensionError(f"activation must be RE or HS, got {self.activation}")


# Bottleneck rows, transcribed column-for-column:
# (expansion, out_c, k_size, stride, activation, use_se, stage_tap)
BACKBONE_ROWS: tuple[BottleneckSpec, ...] = tuple(
    BottleneckSpec(*row)
    for row in [
        (1, 16, 3, 1, "RE", False, None),
        (6, 24, 5, 2, "RE", False, None),
        (3, 24, 7, 1, "RE", True, None),
        (6, 40, 3, 2, "RE", True, None),
        (6, 40, 3, 1, "RE", False, None),
        (3, 40, 5, 1, "RE", True, "stage1"),
        (6, 80, 7, 2, "HS", True, None),
        (6, 80, 3, 1, "HS", False, None),
        (6, 80, 3, 1, "HS", True, None),
        (3, 80, 5, 1, "HS", True, None),
        (6, 112, 7, 1, "HS", False, None),
        (3, 112, 7, 1, "HS", True, "stage2"),
        (6, 160, 5, 2, "HS", True, None),
        (6, 160, 5, 1, "HS", True, None),
        (3, 160, 5, 1, "HS", True, "stage3"),
    ]
)

STAGE_TAPS = ("stage1", "stage2", "stage3")


@dataclass(frozen=True)
class BackboneSpec:
    """Stem configuration plus the ordered bottleneck rows.

    The classifier tail (1x1 conv to 1280 and a class projection, without
    batch norm) is constructible behind ``classifier_classes`` but is never
    part of the detection graph.
    """

    stem_out: int = 16
    stem_k: int = 3
    stem_stride: int = 2
    rows: tuple[BottleneckSpec, ...] = field(default=BACKBONE_ROWS)
    classifier_classes: int | None = None

    def tap_channels(self) -> dict[str, int]:
        return {r.stage_tap: r.out_c for r in self.rows if r.stage_tap}

    def tap_strides(self) -> dict[str, int]:
        stride = self.stem_stride
        taps = {}
        for row in self.rows:
            stride *= row.stride
            if row.stage_tap:
                taps[row.stage_tap] = stride
        return taps


def default_spec() -> BackboneSpec:
    return BackboneSpec()


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------

def _conv_bn(x, w: WeightStore, prefix: str, params: ConvParams) -> Tensor:
    y = conv2d(x, w.get(f"{prefix}.conv.weight"), None, params)
    return batch_norm_infer(
        y,
        w.get(f"{prefix}.bn.gamma"),
        w.get(f"{prefix}.bn.beta"),
        w.get(f"{prefix}.bn.mean"),
        w.get(f"{prefix}.bn.var"),
    )


def se_block(x: Tensor, w: WeightStore, prefix: str, reduction: int = SE_REDUCTION) -> Tensor:
    """Squeeze-excite gate: pooled 1x1 FCs ending in h_sigmoid, scaling x."""
    x = as_nchw(x)
    squeezed = global_avg_pool(x)
    hidden = relu(conv2d(squeezed, w.get(f"{prefix}.fc1.weight"), w.get(f"{prefix}.fc1.bias")))
    gate = h_sigmoid(conv2d(hidden, w.get(f"{prefix}.fc2.weight"), w.get(f"{prefix}.fc2.bias")))
    return x * gate


def inverted_residual(x: Tensor, spec: BottleneckSpec, w: WeightStore, prefix: str) -> Tensor:
    """Expand (1x1) -> depthwise -> optional SE -> project (1x1, linear),
    with a residual add when stride is 1 and channels are preserved."""
    x = as_nchw(x)
    in_c = x.shape[1]
    hidden = in_c * spec.expansion
    act = h_swish if spec.activation == "HS" else relu

    y = x
    if spec.expansion != 1:
        y = act(_conv_bn(y, w, f"{prefix}.expand", ConvParams()))
    dw = ConvParams(stride=spec.stride, padding=spec.k_size // 2, groups=hidden)
    y = act(_conv_bn(y, w, f"{prefix}.depthwise", dw))
    if spec.use_se:
        y = se_block(y, w, f"{prefix}.se")
    y = _conv_bn(y, w, f"{prefix}.project", ConvParams())
    if spec.stride == 1 and in_c == spec.out_c:
        y = y + x
    return y


def backbone_forward(
    image: Tensor, spec: BackboneSpec, w: WeightStore, prefix: str = "backbone"
) -> tuple[Tensor, Tensor, Tensor]:
    """Run the stem and all bottleneck rows, returning the three stage taps."""
    y = h_swish(
        _conv_bn(
            image, w, f"{prefix}.stem",
            ConvParams(stride=spec.stem_stride, padding=spec.stem_k // 2),
        )
    )
    taps: dict[str, Tensor] = {}
    for idx, row in enumerate(spec.rows, start=1):
        y = inverted_residual(y, row, w, f"{prefix}.block{idx}")
        if row.stage_tap:
            taps[row.stage_tap] = y
    missing = [t for t in STAGE_TAPS if t not in taps]
    if missing:
        raise DimensionError(f"backbone spec defines no rows for taps {missing}")
    return taps["stage1"], taps["stage2"], taps["stage3"]


# ---------------------------------------------------------------------------
# Architecture walk / init
# ---------------------------------------------------------------------------

def architecture(spec: BackboneSpec, prefix: str = "backbone") -> list[WeightSpec]:
    """Enumerate every tensor the backbone needs, in forward order."""
    specs: list[WeightSpec] = []
    specs += conv_bn_specs(f"{prefix}.stem", spec.stem_out, 3, spec.stem_k)
    in_c = spec.stem_out
    for idx, row in enumerate(spec.rows, start=1):
        base = f"{prefix}.block{idx}"
        hidden = in_c * row.expansion
        if row.expansion != 1:
            specs += conv_bn_specs(f"{base}.expand", hidden, in_c, 1)
        specs.append(
            WeightSpec(f"{base}.depthwise.conv.weight", (hidden, 1, row.k_size, row.k_size), "fan_in")
        )
        specs += bn_specs(f"{base}.depthwise.bn", hidden)
        if row.use_se:
            reduced = max(1, hidden // SE_REDUCTION)
            specs += [
                WeightSpec(f"{base}.se.fc1.weight", (reduced, hidden, 1, 1), "fan_in"),
                WeightSpec(f"{base}.se.fc1.bias", (reduced,), "zeros"),
                WeightSpec(f"{base}.se.fc2.weight", (hidden, reduced, 1, 1), "fan_in"),
                WeightSpec(f"{base}.se.fc2.bias", (hidden,), "zeros"),
            ]
        specs += conv_bn_specs(f"{base}.project", row.out_c, hidden, 1)
        in_c = row.out_c
    if spec.classifier_classes is not None:
        specs += conv_bn_specs(f"{prefix}.tail.conv", 960, in_c, 1)
        specs += [
            WeightSpec(f"{prefix}.tail.fc1.weight", (1280, 960, 1, 1), "fan_in"),
            WeightSpec(f"{prefix}.tail.fc1.bias", (1280,), "zeros"),
            WeightSpec(f"{prefix}.tail.fc2.weight", (spec.classifier_classes, 1280, 1, 1), "fan_in"),
            WeightSpec(f"{prefix}.tail.fc2.bias", (spec.classifier_classes,), "zeros"),
        ]
    return specs


def init_weights(spec: BackboneSpec, seed: int) -> WeightStore:
    """Random backbone weights, deterministic per seed."""
    return init_store(architecture(spec), seed)
