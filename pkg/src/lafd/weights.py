"""Named-tensor container backing the model and its binary serialization."""

from __future__ import annotations

from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import DimensionError, MissingWeightError


class WeightSpec(NamedTuple):
    """One expected tensor: hierarchical name, shape, and init scheme."""

    name: str
    shape: tuple[int, ...]
    init: str  # "fan_in" | "zeros" | "ones"


class WeightStore:
    """Ordered map from hierarchical layer name to a float32 tensor."""

    def __init__(self):
        self._tensors: dict[str, np.ndarray] = {}

    def put(self, name: str, value) -> None:
        if name in self._tensors:
            raise DimensionError(f"duplicate weight tensor {name!r}")
        arr = np.ascontiguousarray(np.asarray(value, dtype=np.float32))
        self._tensors[name] = arr

    def get(self, name: str) -> np.ndarray:
        try:
            return self._tensors[name]
        except KeyError:
            raise MissingWeightError(name) from None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self._tensors.items())

    def param_count(self) -> int:
        return sum(int(t.size) for t in self._tensors.values())

    def validate_matches(self, expected: Iterable[WeightSpec]) -> None:
        """Require exactly the expected tensors, with matching shapes."""
        wanted = {spec.name: tuple(spec.shape) for spec in expected}
        for name, shape in wanted.items():
            if name not in self._tensors:
                raise MissingWeightError(name)
            got = self._tensors[name].shape
            if got != shape:
                raise DimensionError(
                    f"weight {name!r} has shape {got}, expected {shape}"
                )
        extras = [n for n in self._tensors if n not in wanted]
        if extras:
            raise DimensionError(
                f"weight store holds unexpected tensors: {extras[:5]}"
            )


def init_store(specs: Iterable[WeightSpec], seed: int) -> WeightStore:
    """Deterministically initialize a store from a walked architecture.

    Convolution kernels draw uniform values in [-b, b] with b = sqrt(6 / fan_in);
    everything else is constant per its init tag.
    """
    rng = np.random.default_rng(seed)
    store = WeightStore()
    for spec in specs:
        if spec.init == "fan_in":
            fan_in = int(np.prod(spec.shape[1:]))
            bound = float(np.sqrt(6.0 / fan_in))
            value = rng.uniform(-bound, bound, size=spec.shape).astype(np.float32)
        elif spec.init == "zeros":
            value = np.zeros(spec.shape, dtype=np.float32)
        elif spec.init == "ones":
            value = np.ones(spec.shape, dtype=np.float32)
        else:
            raise ValueError(f"unknown init scheme {spec.init!r}")
        store.put(spec.name, value)
    return store


def conv_bn_specs(prefix: str, out_c: int, in_c: int, k: int) -> list[WeightSpec]:
    """Specs for a conv (no bias) followed by batch norm."""
    return [
        WeightSpec(f"{prefix}.conv.weight", (out_c, in_c, k, k), "fan_in"),
        *bn_specs(f"{prefix}.bn", out_c),
    ]


def bn_specs(prefix: str, channels: int) -> list[WeightSpec]:
    return [
        WeightSpec(f"{prefix}.gamma", (channels,), "ones"),
        WeightSpec(f"{prefix}.beta", (channels,), "zeros"),
        WeightSpec(f"{prefix}.mean", (channels,), "zeros"),
        WeightSpec(f"{prefix}.var", (channels,), "ones"),
    ]
