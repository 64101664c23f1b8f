import numpy as np
import pytest
from PIL import Image

from aquaclear import imageio as io
from aquaclear.imageio import ImageFormatError


def random_u8(seed, h=13, w=17):
    return np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)


class TestQuantization:
    def test_round_half_up(self):
        v = np.array([0.0, 0.5 / 255, 1.4 / 255, 1.5 / 255, 1.0, 2.0, -1.0])
        assert io.to_uint8(v).tolist() == [0, 1, 1, 2, 255, 255, 0]

    def test_u8_float_u8_round_trip_exact(self):
        u = np.arange(256, dtype=np.uint8).reshape(1, 16, 16)
        u = np.broadcast_to(u, (3, 16, 16))
        back = io.to_uint8(io.from_uint8(u))
        assert np.array_equal(back, u)


class TestPng:
    def test_round_trip_pixel_exact(self, tmp_path):
        hwc = random_u8(0)
        path = tmp_path / "img.png"
        io.write_rgb_u8(path, hwc)
        assert np.array_equal(io.read_rgb_u8(path), hwc)

    def test_tensor_round_trip(self, tmp_path):
        hwc = random_u8(1)
        path = tmp_path / "img.png"
        io.write_rgb_u8(path, hwc)
        tensor = io.load_tensor(path)
        assert tensor.shape == (1, 3, 13, 17)
        out = tmp_path / "out.png"
        io.save_tensor(out, tensor)
        assert np.array_equal(io.read_rgb_u8(out), hwc)

    def test_non_rgb_rejected(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.fromarray(np.zeros((5, 5), dtype=np.uint8), "L").save(path)
        with pytest.raises(ImageFormatError) as err:
            io.read_rgb_u8(path)
        assert "L" in str(err.value)

    def test_rgba_rejected(self, tmp_path):
        path = tmp_path / "rgba.png"
        Image.fromarray(np.zeros((5, 5, 4), dtype=np.uint8), "RGBA").save(path)
        with pytest.raises(ImageFormatError):
            io.read_rgb_u8(path)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"not a png at all")
        with pytest.raises(ImageFormatError):
            io.read_rgb_u8(path)


class TestPpm:
    def test_round_trip(self, tmp_path):
        hwc = random_u8(2)
        path = tmp_path / "img.ppm"
        io.write_rgb_u8(path, hwc)
        assert np.array_equal(io.read_rgb_u8(path), hwc)

    def test_header_comments_allowed(self, tmp_path):
        hwc = random_u8(3, 2, 3)
        raw = b"P6\n# a comment\n3 2\n# another\n255\n" + hwc.tobytes()
        path = tmp_path / "c.ppm"
        path.write_bytes(raw)
        assert np.array_equal(io.read_rgb_u8(path), hwc)

    def test_wrong_maxval_rejected(self, tmp_path):
        path = tmp_path / "deep.ppm"
        path.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
        with pytest.raises(ImageFormatError):
            io.read_rgb_u8(path)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(ImageFormatError):
            io.read_rgb_u8(path)

    def test_p3_rejected(self, tmp_path):
        path = tmp_path / "ascii.ppm"
        path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(ImageFormatError):
            io.read_rgb_u8(path)


def test_list_images_sorted(tmp_path):
    for name in ("b.png", "a.ppm", "c.txt", "d.PNG"):
        (tmp_path / name).write_bytes(b"x")
    names = [p.name for p in io.list_images(tmp_path)]
    assert names == ["a.ppm", "b.png", "d.PNG"]
