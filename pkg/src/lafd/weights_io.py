"""Binary weight-file format.

Little-endian layout: magic ``LAFD``, format version u32, tensor count u32,
then per tensor: name length u16, UTF-8 name, rank u8, dims u32 x rank, raw
float32 payload. Serialization round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import WeightFormatError
from .weights import WeightStore

MAGIC = b"LAFD"
VERSION = 1
HEADER = struct.Struct("<4sII")


def weights_to_bytes(store: WeightStore) -> bytes:
    chunks = [HEADER.pack(MAGIC, VERSION, len(store))]
    for name, tensor in store.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(chunks)


def save_weights(store: WeightStore, path: str | Path) -> None:
    Path(path).write_bytes(weights_to_bytes(store))


def serialized_size(store: WeightStore) -> int:
    """Byte length of the serialized store (4 bytes per parameter plus
    header overhead)."""
    size = HEADER.size
    for name, tensor in store.items():
        size += 2 + len(name.encode("utf-8")) + 1 + 4 * tensor.ndim + 4 * tensor.size
    return size


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.data):
            raise WeightFormatError(f"truncated while reading {what}", self.offset)
        out = self.data[self.offset : self.offset + count]
        self.offset += count
        return out

    def unpack(self, fmt: str, what: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def bytes_to_weights(data: bytes) -> WeightStore:
    r = _Reader(data)
    magic, version, count = r.unpack("<4sII", "header")
    if magic != MAGIC:
        raise WeightFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise WeightFormatError(f"unsupported format version {version}", 4)
    store = WeightStore()
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name_offset = r.offset
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise WeightFormatError("tensor name is not valid UTF-8", name_offset) from None
        (rank,) = r.unpack("<B", f"rank of {name!r}")
        dims = r.unpack(f"<{rank}I", f"dims of {name!r}") if rank else ()
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload_offset = r.offset
        payload = r.take(4 * n_values, f"payload of {name!r}")
        tensor = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        if name in store:
            raise WeightFormatError(f"duplicate tensor name {name!r}", payload_offset)
        store.put(name, tensor)
    if r.offset != len(data):
        raise WeightFormatError(
            f"{len(data) - r.offset} trailing bytes after last tensor", r.offset
        )
    return store


def load_weights(path: str | Path) -> WeightStore:
    return bytes_to_weights(Path(path).read_bytes())
