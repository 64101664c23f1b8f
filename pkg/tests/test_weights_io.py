import numpy as np
import pytest

from aquaclear import network as N
from aquaclear import weights_io as W


def assert_weights_equal(a, b):
    assert a.channels == b.channels
    assert a.alpha == b.alpha
    assert a.pyramid.sizes == b.pyramid.sizes
    assert list(a.kernels) == list(b.kernels)
    for name in a.kernels:
        assert np.array_equal(a.kernels[name].weights, b.kernels[name].weights)
        assert np.array_equal(a.kernels[name].bias, b.kernels[name].bias)


class TestRoundTrip:
    def test_save_load_bitwise(self, tmp_path, default_net):
        path = tmp_path / "net.fanw"
        W.save_weights(default_net, path)
        loaded = W.load_weights(path)
        assert_weights_equal(default_net, loaded)

    def test_save_is_byte_deterministic(self, tmp_path, default_net):
        p1, p2 = tmp_path / "a.fanw", tmp_path / "b.fanw"
        W.save_weights(default_net, p1)
        W.save_weights(default_net, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_nondefault_alpha_and_sizes_survive(self, tmp_path):
        net = N.default_network(seed=3, alpha=0.7, pyramid_sizes=(16, 48))
        path = tmp_path / "net.fanw"
        W.save_weights(net, path)
        loaded = W.load_weights(path)
        assert loaded.alpha == 0.7
        assert loaded.pyramid.sizes == (16, 48)
        assert_weights_equal(net, loaded)

    def test_trained_f64_weights_store_as_f32(self, tmp_path):
        net = N.default_network(seed=1, dtype=np.float64)
        path = tmp_path / "net.fanw"
        W.save_weights(net, path)
        loaded = W.load_weights(path)
        assert loaded.dtype == np.float32


class TestRejection:
    @pytest.fixture()
    def saved(self, tmp_path, default_net):
        path = tmp_path / "net.fanw"
        W.save_weights(default_net, path)
        return path

    def test_corrupted_blob_byte_fails_checksum(self, saved):
        raw = bytearray(saved.read_bytes())
        raw[-5] ^= 0xFF
        saved.write_bytes(bytes(raw))
        with pytest.raises(W.WeightChecksumError):
            W.load_weights(saved)

    def test_corrupted_manifest_crc_fails_checksum(self, saved):
        text = saved.read_bytes()
        idx = text.index(b"crc32 ")
        raw = bytearray(text)
        raw[idx + 6] = ord("f") if raw[idx + 6] != ord("f") else ord("0")
        saved.write_bytes(bytes(raw))
        with pytest.raises(W.WeightChecksumError):
            W.load_weights(saved)

    def test_truncated_blob(self, saved):
        raw = saved.read_bytes()
        saved.write_bytes(raw[:-100])
        with pytest.raises(W.WeightTruncatedError):
            W.load_weights(saved)

    def test_param_count_mismatch(self, saved):
        raw = saved.read_bytes()
        raw = raw.replace(b"params 8780", b"params 8781")
        saved.write_bytes(raw)
        with pytest.raises(W.WeightValidationError):
            W.load_weights(saved)

    def test_version_mismatch(self, saved):
        raw = saved.read_bytes()
        saved.write_bytes(raw.replace(b"FANW1 1", b"FANW1 9", 1))
        with pytest.raises(W.WeightFormatError):
            W.load_weights(saved)

    def test_wrong_magic(self, saved):
        raw = saved.read_bytes()
        saved.write_bytes(b"JUNK! 1" + raw[7:])
        with pytest.raises(W.WeightFormatError):
            W.load_weights(saved)

    def test_missing_separator(self, tmp_path):
        path = tmp_path / "bad.fanw"
        path.write_bytes(b"FANW1 1\nchannels 16\n")
        with pytest.raises(W.WeightFormatError):
            W.load_weights(path)

    def test_errors_are_distinct_types(self):
        kinds = {W.WeightChecksumError, W.WeightTruncatedError,
                 W.WeightValidationError, W.WeightFormatError}
        assert len(kinds) == 4
        for k in kinds:
            assert issubclass(k, W.WeightLoadError)
