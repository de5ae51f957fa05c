"""Primitive neural kernels: convolution, batch norm, activations, pooling,
bilinear resampling.

All kernels are pure functions of immutable inputs, compute in single
precision, and are deterministic: identical inputs give identical outputs
across runs. Padding is zero-fill; out-of-bounds bilinear neighbors
contribute 0.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, InputError
from .tensor import ConvParams, Tensor, as_channel_vector, as_nchw

_ONE_SIXTH = np.float32(1.0 / 6.0)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def conv2d(
    x: Tensor,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    params: ConvParams | None = None,
) -> Tensor:
    """2-d convolution (cross-correlation) over an NCHW tensor.

    ``weight`` has shape (out_c, in_c // groups, kH, kW). The depthwise case
    is groups == in_c == out_c.
    """
    p = params or ConvParams()
    x = as_nchw(x)
    w = np.asarray(weight, dtype=np.float32)
    if w.ndim != 4:
        raise DimensionError(f"weight must be rank-4, got shape {w.shape}")
    n, c, h, wd = x.shape
    oc, icg, kh, kw = w.shape
    if c % p.groups != 0:
        raise DimensionError(
            f"input channels {c} not divisible by groups {p.groups}"
        )
    if oc % p.groups != 0:
        raise DimensionError(
            f"output channels {oc} not divisible by groups {p.groups}"
        )
    if icg != c // p.groups:
        raise DimensionError(
            f"weight expects {icg} input channels per group, input supplies "
            f"{c // p.groups}"
        )
    if bias is not None:
        bias = as_channel_vector(bias, oc, "bias")
    oh = p.out_size(h, kh, "height")
    ow = p.out_size(wd, kw, "width")

    if p.padding > 0:
        xp = np.pad(
            x, ((0, 0), (0, 0), (p.padding, p.padding), (p.padding, p.padding))
        )
    else:
        xp = x

    if p.groups == c and icg == 1 and oc == c:
        out = _depthwise(xp, w, p.stride, oh, ow)
    elif p.groups == 1:
        out = _im2col_matmul(xp, w, p.stride, oh, ow)
    else:
        cg, ocg = c // p.groups, oc // p.groups
        parts = [
            _im2col_matmul(
                xp[:, g * cg : (g + 1) * cg],
                w[g * ocg : (g + 1) * ocg],
                p.stride,
                oh,
                ow,
            )
            for g in range(p.groups)
        ]
        out = np.concatenate(parts, axis=1)

    if bias is not None:
        out = out + bias.reshape(1, oc, 1, 1)
    return np.ascontiguousarray(out)


def _im2col_matmul(xp, w, stride, oh, ow):
    n, c = xp.shape[:2]
    oc, _, kh, kw = w.shape
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    cols = cols.reshape(n * oh * ow, c * kh * kw)
    out = cols @ w.reshape(oc, -1).T
    return out.reshape(n, oh, ow, oc).transpose(0, 3, 1, 2)


def _depthwise(xp, w, stride, oh, ow):
    n, c = xp.shape[:2]
    kh, kw = w.shape[2:]
    out = np.zeros((n, c, oh, ow), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            patch = xp[
                :, :, i : i + stride * (oh - 1) + 1 : stride,
                j : j + stride * (ow - 1) + 1 : stride,
            ]
            out += patch * w[:, 0, i, j].reshape(1, c, 1, 1)
    return out


# ---------------------------------------------------------------------------
# Batch normalization (inference mode)
# ---------------------------------------------------------------------------

def batch_norm_infer(
    x: Tensor,
    gamma,
    beta,
    running_mean,
    running_var,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel affine normalization with frozen statistics."""
    x = as_nchw(x)
    c = x.shape[1]
    gamma = as_channel_vector(gamma, c, "gamma")
    beta = as_channel_vector(beta, c, "beta")
    mean = as_channel_vector(running_mean, c, "running_mean")
    var = as_channel_vector(running_var, c, "running_var")
    if np.any(var < 0):
        raise InputError("running_var must be non-negative")
    scale = gamma / np.sqrt(var + np.float32(eps))
    return (x - mean.reshape(1, c, 1, 1)) * scale.reshape(1, c, 1, 1) + beta.reshape(
        1, c, 1, 1
    )


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float32), np.float32(0))


def relu6(x):
    return np.clip(np.asarray(x, dtype=np.float32), np.float32(0), np.float32(6))


def h_sigmoid(x):
    """Piecewise-linear sigmoid: clamp(x + 3, 0, 6) / 6."""
    x = np.asarray(x, dtype=np.float32)
    return np.clip(x + np.float32(3), np.float32(0), np.float32(6)) * _ONE_SIXTH


def h_swish(x):
    """x * h_sigmoid(x); identity for x >= 3, zero for x <= -3."""
    x = np.asarray(x, dtype=np.float32)
    return x * h_sigmoid(x)


def leaky_relu(x, slope: float):
    x = np.asarray(x, dtype=np.float32)
    return np.where(x >= 0, x, np.float32(slope) * x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float32)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(np.float32)


_ACTIVATIONS = {
    "relu": relu,
    "relu6": relu6,
    "h_sigmoid": h_sigmoid,
    "h_swish": h_swish,
    "sigmoid": sigmoid,
}


def activate(x, kind: str, slope: float | None = None):
    """Elementwise activation dispatch; ``slope`` only for leaky_relu."""
    if kind == "leaky_relu":
        if slope is None:
            raise InputError("leaky_relu requires a slope")
        return leaky_relu(x, slope)
    if slope is not None:
        raise InputError(f"slope is only valid for leaky_relu, not {kind!r}")
    try:
        return _ACTIVATIONS[kind](x)
    except KeyError:
        raise InputError(f"unknown activation kind {kind!r}") from None


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial extent, keeping an H=W=1 map."""
    x = as_nchw(x)
    return x.mean(axis=(2, 3), keepdims=True, dtype=np.float32)


# ---------------------------------------------------------------------------
# Bilinear sampling / resampling
# ---------------------------------------------------------------------------

def bilinear_sample(x: Tensor, n: int, c: int, px: float, py: float) -> float:
    """Sample one channel map at continuous (px, py); zero outside the map.

    ``px`` indexes the width axis, ``py`` the height axis; integer in-range
    coordinates reproduce stored values exactly.
    """
    x = as_nchw(x)
    h, w = x.shape[2:]
    x0 = math.floor(px)
    y0 = math.floor(py)
    fx = px - x0
    fy = py - y0

    def at(ix, iy):
        if 0 <= ix < w and 0 <= iy < h:
            return float(x[n, c, iy, ix])
        return 0.0

    return (
        (1.0 - fx) * (1.0 - fy) * at(x0, y0)
        + fx * (1.0 - fy) * at(x0 + 1, y0)
        + (1.0 - fx) * fy * at(x0, y0 + 1)
        + fx * fy * at(x0 + 1, y0 + 1)
    )


def bilinear_gather(x: Tensor, sy: np.ndarray, sx: np.ndarray) -> Tensor:
    """Sample every channel of ``x`` at per-position coordinates.

    ``sy``/``sx`` have shape (N, outH, outW); neighbors falling outside the
    map contribute exactly 0. Returns (N, C, outH, outW) float32.
    """
    x = as_nchw(x)
    n, c, h, w = x.shape
    sy = np.asarray(sy, dtype=np.float64)
    sx = np.asarray(sx, dtype=np.float64)
    if sy.shape != sx.shape or sy.ndim != 3 or sy.shape[0] != n:
        raise DimensionError(
            f"coordinate grids must be (batch, outH, outW); got {sy.shape} / {sx.shape}"
        )
    y0 = np.floor(sy)
    x0 = np.floor(sx)
    fy = (sy - y0).astype(np.float32)
    fx = (sx - x0).astype(np.float32)
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)

    out = np.zeros((n, c) + sy.shape[1:], dtype=np.float32)
    corners = (
        (y0, x0, (1 - fy) * (1 - fx)),
        (y0, x0 + 1, (1 - fy) * fx),
        (y0 + 1, x0, fy * (1 - fx)),
        (y0 + 1, x0 + 1, fy * fx),
    )
    for yy, xx, wgt in corners:
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        wv = (wgt * valid).astype(np.float32)
        for b in range(n):
            out[b] += x[b][:, yc[b], xc[b]] * wv[b]
    return out


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resize to (out_h, out_w) with half-pixel-centered coordinate mapping.

    Source coordinates follow src = (dst + 0.5) / scale - 0.5, clamped to the
    valid range so constant inputs map to constant outputs.
    """
    x = as_nchw(x)
    if out_h < 1 or out_w < 1:
        raise DimensionError(
            f"target size must be positive, got {out_h}x{out_w}"
        )
    n, _, h, w = x.shape
    sy = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    sx = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    grid_y = np.broadcast_to(sy[None, :, None], (n, out_h, out_w))
    grid_x = np.broadcast_to(sx[None, None, :], (n, out_h, out_w))
    return bilinear_gather(x, grid_y, grid_x)
