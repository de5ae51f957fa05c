"""Deformable convolution: an offset-predicting convolution followed by a
bilinear-sampled convolution.

The offset field carries one (dy, dx) pair per kernel sampling position:
2*kH*kW channels, ordered row-major over the kernel with channel 2t = dy and
2t + 1 = dx for tap t, in pixels of the input map. No modulation mask.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, InputError
from .ops import batch_norm_infer, bilinear_gather, conv2d, leaky_relu
from .tensor import ConvParams, Tensor, as_nchw
from .weights import WeightStore

# Offset field for a kH x kW kernel: (N, 2*kH*kW, outH, outW) float32.
OffsetField = np.ndarray


def dcn_offsets(
    x: Tensor,
    weight: np.ndarray,
    bias: np.ndarray | None,
    params: ConvParams,
    kernel_size: tuple[int, int],
) -> OffsetField:
    """Predict per-tap sampling offsets with an ordinary convolution."""
    kh, kw = kernel_size
    w = np.asarray(weight, dtype=np.float32)
    if w.ndim != 4 or w.shape[0] != 2 * kh * kw:
        raise DimensionError(
            f"offset conv must output {2 * kh * kw} channels for a "
            f"{kh}x{kw} kernel, weight shape is {w.shape}"
        )
    return conv2d(x, w, bias, params)


def deform_conv2d(
    x: Tensor,
    weight: np.ndarray,
    offsets: OffsetField,
    params: ConvParams | None = None,
) -> Tensor:
    """Convolution whose kernel taps sample at fractional offsets.

    Each tap of each output location reads the input at
    (base + tap + offset) via bilinear interpolation, with out-of-bounds
    neighbors contributing 0; zero offsets reduce to plain ``conv2d``.
    """
    p = params or ConvParams()
    if p.groups != 1:
        raise InputError("deformable convolution supports groups=1 only")
    x = as_nchw(x)
    w = np.asarray(weight, dtype=np.float32)
    if w.ndim != 4:
        raise DimensionError(f"weight must be rank-4, got shape {w.shape}")
    n, c, h, wd = x.shape
    oc, ic, kh, kw = w.shape
    if ic != c:
        raise DimensionError(
            f"weight expects {ic} input channels, input supplies {c}"
        )
    oh = p.out_size(h, kh, "height")
    ow = p.out_size(wd, kw, "width")
    off = np.asarray(offsets, dtype=np.float32)
    if off.shape != (n, 2 * kh * kw, oh, ow):
        raise DimensionError(
            f"offset field shape {off.shape} does not match expected "
            f"{(n, 2 * kh * kw, oh, ow)}"
        )

    base_y = np.arange(oh, dtype=np.float64) * p.stride - p.padding
    base_x = np.arange(ow, dtype=np.float64) * p.stride - p.padding
    cols = np.empty((n, oh, ow, c, kh * kw), dtype=np.float32)
    for t in range(kh * kw):
        i, j = divmod(t, kw)
        sy = base_y[None, :, None] + i + off[:, 2 * t].astype(np.float64)
        sx = base_x[None, None, :] + j + off[:, 2 * t + 1].astype(np.float64)
        cols[..., t] = bilinear_gather(x, sy, sx).transpose(0, 2, 3, 1)

    out = cols.reshape(n * oh * ow, c * kh * kw) @ w.reshape(oc, -1).T
    return np.ascontiguousarray(out.reshape(n, oh, ow, oc).transpose(0, 3, 1, 2))


def dcn_layer(
    x: Tensor,
    w: WeightStore,
    prefix: str,
    params: ConvParams | None = None,
    slope: float = 0.1,
) -> Tensor:
    """Offset conv -> deformable conv -> batch norm -> leaky ReLU."""
    p = params or ConvParams(stride=1, padding=1)
    main = w.get(f"{prefix}.conv.weight")
    kh, kw = main.shape[2:]
    offsets = dcn_offsets(
        x,
        w.get(f"{prefix}.offset.weight"),
        w.get(f"{prefix}.offset.bias"),
        p,
        (kh, kw),
    )
    y = deform_conv2d(x, main, offsets, p)
    y = batch_norm_infer(
        y,
        w.get(f"{prefix}.bn.gamma"),
        w.get(f"{prefix}.bn.beta"),
        w.get(f"{prefix}.bn.mean"),
        w.get(f"{prefix}.bn.var"),
    )
    return leaky_relu(y, slope)
