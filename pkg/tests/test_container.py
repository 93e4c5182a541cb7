import numpy as np
import pytest

from hyqa.container import (
    ContainerError,
    load,
    read_varints,
    save,
    write_varints,
)


class TestRoundtrip:
    def test_arrays_and_meta(self, tmp_path):
        path = tmp_path / "x.hyqa"
        arrays = {
            "floats": np.arange(12, dtype=np.float64).reshape(3, 4),
            "ints": np.array([1, 2, 3], dtype=np.int64),
            "bytes": np.frombuffer(b"\x00\x01\xff", dtype=np.uint8),
        }
        meta = {"name": "demo", "nested": {"a": [1, 2]}}
        save(path, "sparse", meta, arrays)
        kind, got_meta, got_arrays = load(path)
        assert kind == "sparse"
        assert got_meta == meta
        assert set(got_arrays) == set(arrays)
        for name in arrays:
            np.testing.assert_array_equal(got_arrays[name], arrays[name])
            assert got_arrays[name].dtype == arrays[name].dtype

    def test_empty_arrays(self, tmp_path):
        path = tmp_path / "x.hyqa"
        save(path, "dense", {}, {"m": np.zeros((0, 4))})
        _, _, arrays = load(path)
        assert arrays["m"].shape == (0, 4)

    def test_scalar_zero_dim(self, tmp_path):
        path = tmp_path / "x.hyqa"
        save(path, "dense", {}, {"s": np.float64(3.5)})
        _, _, arrays = load(path)
        assert arrays["s"] == 3.5

    def test_deterministic_bytes(self, tmp_path):
        arrays = {"b": np.ones(3), "a": np.zeros(2)}
        meta = {"z": 1, "a": 2}
        save(tmp_path / "one.hyqa", "k", meta, arrays)
        save(tmp_path / "two.hyqa", "k", dict(reversed(meta.items())), dict(reversed(arrays.items())))
        assert (tmp_path / "one.hyqa").read_bytes() == (tmp_path / "two.hyqa").read_bytes()

    def test_big_endian_input_normalized(self, tmp_path):
        path = tmp_path / "x.hyqa"
        arr = np.array([1.5, 2.5], dtype=">f8")
        save(path, "k", {}, {"a": arr})
        _, _, arrays = load(path)
        np.testing.assert_array_equal(arrays["a"], np.array([1.5, 2.5]))


class TestValidation:
    def test_kind_mismatch(self, tmp_path):
        path = tmp_path / "x.hyqa"
        save(path, "sparse", {}, {})
        with pytest.raises(ContainerError, match="expected kind"):
            load(path, kind="dense")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.hyqa"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(ContainerError, match="magic"):
            load(path)

    def test_truncated_array(self, tmp_path):
        path = tmp_path / "x.hyqa"
        save(path, "k", {}, {"a": np.arange(100, dtype=np.float64)})
        data = path.read_bytes()
        path.write_bytes(data[:-10])
        with pytest.raises(ContainerError, match="truncated"):
            load(path)


class TestVarints:
    def test_known_encodings(self):
        assert write_varints([0]) == b"\x00"
        assert write_varints([127]) == b"\x7f"
        assert write_varints([128]) == b"\x80\x01"
        assert write_varints([300]) == b"\xac\x02"

    @pytest.mark.parametrize("values", [[0], [1, 2, 3], [2**40, 0, 127, 128, 16383, 16384]])
    def test_roundtrip(self, values):
        data = write_varints(values)
        got, pos = read_varints(data, len(values))
        assert got == values
        assert pos == len(data)

    def test_offset_decoding(self):
        data = write_varints([5]) + write_varints([300, 7])
        got, pos = read_varints(data, 2, offset=1)
        assert got == [300, 7]
        assert pos == len(data)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            write_varints([-1])
