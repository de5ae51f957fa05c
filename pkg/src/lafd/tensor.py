"""NCHW tensor conventions and convolution geometry.

Feature maps are plain ``numpy.ndarray`` values of rank 4 (batch, channels,
height, width), single precision, row-major. ``as_nchw`` is the entry gate
every public kernel runs its inputs through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

# Rank-4 NCHW float32 array; an alias rather than a wrapper so tensors stay
# ordinary numpy values.
Tensor = np.ndarray


def as_nchw(x, name: str = "input") -> Tensor:
    """Validate/coerce ``x`` to a rank-4 float32 NCHW array."""
    arr = np.asarray(x)
    if arr.ndim != 4:
        raise DimensionError(
            f"{name} must be rank-4 NCHW, got rank {arr.ndim} with shape {arr.shape}"
        )
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    return arr


def as_channel_vector(v, channels: int, name: str) -> np.ndarray:
    """Validate a per-channel parameter vector of length ``channels``."""
    arr = np.asarray(v, dtype=np.float32).reshape(-1)
    if arr.shape[0] != channels:
        raise DimensionError(
            f"{name} has length {arr.shape[0]}, expected {channels} (channel axis)"
        )
    return arr


@dataclass(frozen=True)
class ConvParams:
    """Stride/padding/grouping of a 2-d convolution (dilation fixed at 1)."""

    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        if self.stride < 1:
            raise DimensionError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise DimensionError(f"padding must be >= 0, got {self.padding}")
        if self.groups < 1:
            raise DimensionError(f"groups must be >= 1, got {self.groups}")

    def out_size(self, in_size: int, kernel: int, axis: str) -> int:
        padded = in_size + 2 * self.padding
        if kernel > padded:
            raise DimensionError(
                f"kernel size {kernel} exceeds padded {axis} {padded}"
            )
        out = (padded - kernel) // self.stride + 1
        if out < 1:
            raise DimensionError(
                f"convolution produces empty {axis} ({out}) for input {in_size}"
            )
        return out
