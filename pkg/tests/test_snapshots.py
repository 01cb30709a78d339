import numpy as np
import pytest

from cplap import snapshots


class TestRoundTrip:
    def test_complex_field(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = rng.standard_normal((2, 3, 8, 8)) + 1j * rng.standard_normal((2, 3, 8, 8))
        path = tmp_path / "f.cplf"
        snapshots.write_field(path, arr, h=0.125, role="gradient", kind="test",
                              params={"p": 3.0})
        got, header = snapshots.read_field(path)
        assert np.array_equal(got, arr)
        assert header["role"] == "gradient"
        assert header["h"] == 0.125
        assert header["params"]["p"] == 3.0
        assert header["complex"] is True

    def test_real_field(self, tmp_path):
        arr = np.arange(12.0).reshape(3, 4)
        path = tmp_path / "w.cplf"
        snapshots.write_field(path, arr, h=0.5, role="weight")
        got, header = snapshots.read_field(path)
        assert np.array_equal(got, arr)
        assert header["complex"] is False

    def test_payload_layout(self, tmp_path):
        # interleaved Re/Im little-endian float64 after the JSON header
        arr = np.array([[1.0 + 2.0j, 3.0 - 4.0j]])
        path = tmp_path / "x.cplf"
        snapshots.write_field(path, arr, h=1.0, role="coefficient")
        raw = path.read_bytes()
        assert raw[:4] == b"CPLF"
        hlen = int.from_bytes(raw[4:8], "little")
        payload = np.frombuffer(raw[8 + hlen:], dtype="<f8")
        assert payload.tolist() == [1.0, 2.0, 3.0, -4.0]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\0" * 16)
        with pytest.raises(ValueError):
            snapshots.read_field(path)

    def test_truncated_payload(self, tmp_path):
        arr = np.ones((4, 4), dtype=complex)
        path = tmp_path / "t.cplf"
        snapshots.write_field(path, arr, h=1.0, role="scalar")
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError):
            snapshots.read_field(path)
