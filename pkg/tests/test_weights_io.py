"""Binary weight-file format: round trips and corruption handling."""

import struct

import numpy as np
import pytest

from lafd.errors import WeightFormatError
from lafd.weights import WeightStore
from lafd.weights_io import (
    MAGIC,
    bytes_to_weights,
    load_weights,
    save_weights,
    serialized_size,
    weights_to_bytes,
)


def _small_store(seed=0):
    rng = np.random.default_rng(seed)
    store = WeightStore()
    store.put("a.conv.weight", rng.standard_normal((4, 3, 3, 3), dtype=np.float32))
    store.put("a.bn.gamma", rng.standard_normal(4).astype(np.float32))
    store.put("b.bias", rng.standard_normal(7).astype(np.float32))
    return store


class TestRoundTrip:
    def test_serialize_load_serialize_is_byte_identical(self):
        store = _small_store()
        blob = weights_to_bytes(store)
        again = weights_to_bytes(bytes_to_weights(blob))
        assert blob == again

    def test_values_and_order_preserved(self):
        store = _small_store(2)
        loaded = bytes_to_weights(weights_to_bytes(store))
        assert loaded.names() == store.names()
        for name, tensor in store.items():
            assert np.array_equal(loaded[name], tensor)

    def test_file_round_trip(self, tmp_path):
        store = _small_store(3)
        path = tmp_path / "w.lafd"
        save_weights(store, path)
        assert path.read_bytes()[:4] == MAGIC
        loaded = load_weights(path)
        assert loaded.names() == store.names()

    def test_serialized_size_matches_file(self, tmp_path):
        store = _small_store(4)
        path = tmp_path / "w.lafd"
        save_weights(store, path)
        assert path.stat().st_size == serialized_size(store)

    def test_empty_store_round_trips(self):
        store = WeightStore()
        loaded = bytes_to_weights(weights_to_bytes(store))
        assert len(loaded) == 0
        assert loaded.param_count() == 0


class TestCorruption:
    def test_bad_magic(self):
        blob = b"XXXX" + weights_to_bytes(_small_store())[4:]
        with pytest.raises(WeightFormatError, match="magic"):
            bytes_to_weights(blob)

    def test_bad_version(self):
        store = _small_store()
        blob = bytearray(weights_to_bytes(store))
        blob[4:8] = struct.pack("<I", 9)
        with pytest.raises(WeightFormatError, match="version") as err:
            bytes_to_weights(bytes(blob))
        assert err.value.offset == 4

    def test_truncated_payload_reports_offset(self):
        blob = weights_to_bytes(_small_store())
        with pytest.raises(WeightFormatError, match="truncated") as err:
            bytes_to_weights(blob[:-5])
        assert err.value.offset > 0

    def test_trailing_garbage_rejected(self):
        blob = weights_to_bytes(_small_store()) + b"\x00\x01"
        with pytest.raises(WeightFormatError, match="trailing"):
            bytes_to_weights(blob)

    def test_duplicate_names_rejected(self):
        store = WeightStore()
        store.put("x", np.zeros(2, dtype=np.float32))
        blob = bytearray(weights_to_bytes(store))
        # claim two tensors, append a second copy of the same record
        blob[8:12] = struct.pack("<I", 2)
        record = bytes(blob[12:])
        blob.extend(record)
        with pytest.raises(WeightFormatError, match="duplicate"):
            bytes_to_weights(bytes(blob))


class TestStoreValidation:
    def test_missing_tensor_named(self):
        from lafd.weights import WeightSpec

        store = WeightStore()
        specs = [WeightSpec("layer.weight", (2, 2), "zeros")]
        with pytest.raises(Exception, match="layer.weight"):
            store.validate_matches(specs)

    def test_shape_mismatch_reported(self):
        from lafd.errors import DimensionError
        from lafd.weights import WeightSpec

        store = WeightStore()
        store.put("layer.weight", np.zeros((2, 3), dtype=np.float32))
        with pytest.raises(DimensionError, match="layer.weight"):
            store.validate_matches([WeightSpec("layer.weight", (2, 2), "zeros")])

    def test_extras_rejected(self):
        from lafd.errors import DimensionError
        from lafd.weights import WeightSpec

        store = WeightStore()
        store.put("layer.weight", np.zeros((2, 2), dtype=np.float32))
        store.put("stray", np.zeros(1, dtype=np.float32))
        with pytest.raises(DimensionError, match="stray"):
            store.validate_matches([WeightSpec("layer.weight", (2, 2), "zeros")])
