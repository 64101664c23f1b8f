"""PNG and binary PPM (P6) image I/O.

Images move through the engine as channel-first float tensors in [0, 1].
Quantization to 8 bits is round-half-up after clamping, so an untouched
uint8 image survives a load/save round trip pixel-exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_EXTENSIONS = (".png", ".ppm")


class ImageFormatError(ValueError):
    """Unreadable, non-RGB, or unsupported image file."""


def to_uint8(img: np.ndarray) -> np.ndarray:
    """[0, 1] float -> uint8 with round-half-up after clamping."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(img: np.ndarray, dtype=np.float32) -> np.ndarray:
    return img.astype(dtype) / dtype(255)


def _read_ppm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(b"P6"):
        raise ImageFormatError(f"{path}: not a binary PPM (P6) file")
    # Header: magic, width, height, maxval as whitespace/comment-separated
    # tokens, then a single whitespace byte before the pixel data.
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated PPM header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise ImageFormatError(f"{path}: bad PPM header token "
                                   f"{data[start:pos]!r}") from None
    pos += 1  # the single whitespace after maxval
    width, height, maxval = tokens
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 PPMs are supported, "
                               f"got {maxval}")
    need = width * height * 3
    pixels = data[pos:pos + need]
    if len(pixels) < need:
        raise ImageFormatError(f"{path}: PPM pixel data truncated "
                               f"({len(pixels)} of {need} bytes)")
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
    return arr


def _write_ppm(path: Path, hwc: np.ndarray) -> None:
    h, w = hwc.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    path.write_bytes(header + hwc.tobytes())


def read_rgb_u8(path) -> np.ndarray:
    """Read a PNG or PPM(P6) file as (h, w, 3) uint8; non-RGB inputs fail."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        return _read_ppm(path)
    try:
        with Image.open(path) as img:
            if img.mode != "RGB":
                raise ImageFormatError(f"{path}: expected an RGB image, "
                                       f"got mode {img.mode!r}")
            return np.asarray(img, dtype=np.uint8)
    except ImageFormatError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"{path}: cannot read image ({exc})") from exc


def write_rgb_u8(path, hwc: np.ndarray) -> None:
    """Write (h, w, 3) uint8 as PNG or PPM(P6), chosen by extension."""
    path = Path(path)
    hwc = np.ascontiguousarray(hwc, dtype=np.uint8)
    if path.suffix.lower() == ".ppm":
        _write_ppm(path, hwc)
    else:
        Image.fromarray(hwc, "RGB").save(path, format="PNG")


def load_tensor(path, dtype=np.float32) -> np.ndarray:
    """File -> (1, 3, h, w) float tensor in [0, 1]."""
    hwc = read_rgb_u8(path)
    return from_uint8(hwc, dtype).transpose(2, 0, 1)[None]


def save_tensor(path, tensor: np.ndarray) -> None:
    """(3, h, w) or (1, 3, h, w) float tensor in [0, 1] -> file."""
    if tensor.ndim == 4:
        if tensor.shape[0] != 1:
            raise ImageFormatError(f"can only save single images, got batch "
                                   f"{tensor.shape}")
        tensor = tensor[0]
    write_rgb_u8(path, to_uint8(tensor).transpose(1, 2, 0))


def list_images(directory) -> list[Path]:
    """Sorted image files directly inside ``directory``."""
    d = Path(directory)
    return sorted(p for p in d.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)
