"""FANW1 weight files: text manifest + little-endian float32 blob.

Layout::

    FANW1 1
    channels 16
    alpha 0.4
    pyramid 32,64,128
    kernel stem 16 3 3 0
    kernel mcem1.b0.c1 4 4 1 1792
    ...
    params 8780
    crc32 7f3a0c11
    blob 35120
    ---
    <raw float32 data>

Each kernel's weights start at the listed byte offset into the blob; the
bias follows the weights contiguously.  The manifest order is the network's
canonical kernel order, and a save/load round trip is bit-exact.
"""

from __future__ import annotations

import zlib
from pathlib import Path

import numpy as np

from .network import NetworkWeights, PyramidConfig
from .tensor_ops import ConvKernel

MAGIC = "FANW1"
VERSION = 1
_SEPARATOR = b"---\n"
_F32 = np.dtype("<f4")


class WeightLoadError(Exception):
    """Base class for weight-file failures."""


class WeightFormatError(WeightLoadError):
    """Unknown magic, unsupported version, or a malformed manifest."""


class WeightChecksumError(WeightLoadError):
    """Blob CRC-32 does not match the manifest."""


class WeightTruncatedError(WeightLoadError):
    """Blob is shorter than the manifest declares."""


class WeightValidationError(WeightLoadError):
    """Manifest fields are mutually inconsistent."""


def save_weights(weights: NetworkWeights, path) -> None:
    """Write a FANW1 file; float64 weights are stored as float32."""
    chunks: list[bytes] = []
    lines = [f"{MAGIC} {VERSION}",
             f"channels {weights.channels}",
             f"alpha {weights.alpha!r}",
             f"pyramid {','.join(str(s) for s in weights.pyramid.sizes)}"]
    offset = 0
    for name, k in weights.kernels.items():
        w = np.ascontiguousarray(k.weights, dtype=_F32)
        b = np.ascontiguousarray(k.bias, dtype=_F32)
        lines.append(f"kernel {name} {k.c_out} {k.c_in} {k.ksize} {offset}")
        chunks.append(w.tobytes())
        chunks.append(b.tobytes())
        offset += w.nbytes + b.nbytes
    blob = b"".join(chunks)
    lines.append(f"params {sum(k.param_count for k in weights.kernels.values())}")
    lines.append(f"crc32 {zlib.crc32(blob):08x}")
    lines.append(f"blob {len(blob)}")
    manifest = ("\n".join(lines) + "\n").encode("ascii")
    Path(path).write_bytes(manifest + _SEPARATOR + blob)


def _parse_manifest(lines: list[str]) -> dict:
    if not lines:
        raise WeightFormatError("empty manifest")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        raise WeightFormatError(f"not a {MAGIC} file (got header {lines[0]!r})")
    if head[1] != str(VERSION):
        raise WeightFormatError(f"unsupported {MAGIC} version {head[1]} "
                                f"(expected {VERSION})")
    fields: dict = {"kernels": []}
    for line in lines[1:]:
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        try:
            if key == "kernel":
                name, c_out, c_in, ksize, offset = parts[1:]
                fields["kernels"].append(
                    (name, int(c_out), int(c_in), int(ksize), int(offset)))
            elif key == "pyramid":
                fields["pyramid"] = tuple(int(s) for s in parts[1].split(","))
            elif key in ("channels", "params", "blob"):
                fields[key] = int(parts[1])
            elif key == "alpha":
                fields["alpha"] = float(parts[1])
            elif key == "crc32":
                fields["crc32"] = int(parts[1], 16)
            else:
                raise WeightFormatError(f"unknown manifest key {key!r}")
        except (ValueError, IndexError) as exc:
            raise WeightFormatError(f"malformed manifest line {line!r}") from exc
    missing = [k for k in ("channels", "alpha", "pyramid", "params", "crc32", "blob")
               if k not in fields]
    if missing:
        raise WeightFormatError(f"manifest is missing fields: {missing}")
    if not fields["kernels"]:
        raise WeightFormatError("manifest lists no kernels")
    return fields


def load_weights(path) -> NetworkWeights:
    """Read and validate a FANW1 file."""
    raw = Path(path).read_bytes()
    sep = raw.find(_SEPARATOR)
    if sep < 0:
        raise WeightFormatError("missing manifest/blob separator")
    manifest = raw[:sep].decode("ascii", errors="replace").splitlines()
    blob = raw[sep + len(_SEPARATOR):]
    fields = _parse_manifest(manifest)

    if len(blob) < fields["blob"]:
        raise WeightTruncatedError(f"blob holds {len(blob)} bytes, manifest "
                                   f"declares {fields['blob']}")
    blob = blob[:fields["blob"]]
    if fields["params"] * _F32.itemsize != fields["blob"]:
        raise WeightValidationError(
            f"param count {fields['params']} inconsistent with blob length "
            f"{fields['blob']} (expected {fields['params'] * _F32.itemsize})")
    crc = zlib.crc32(blob)
    if crc != fields["crc32"]:
        raise WeightChecksumError(f"blob crc32 {crc:08x} does not match "
                                  f"manifest {fields['crc32']:08x}")

    kernels: dict[str, ConvKernel] = {}
    expected_offset = 0
    total = 0
    for name, c_out, c_in, ksize, offset in fields["kernels"]:
        if offset != expected_offset:
            raise WeightValidationError(f"kernel {name!r} offset {offset} breaks "
                                        f"blob continuity (expected {expected_offset})")
        n_w = c_out * c_in * ksize * ksize
        end = offset + (n_w + c_out) * _F32.itemsize
        if end > len(blob):
            raise WeightValidationError(f"kernel {name!r} overruns the blob")
        flat = np.frombuffer(blob[offset:end], dtype=_F32)
        w = flat[:n_w].reshape(c_out, c_in, ksize, ksize).copy()
        b = flat[n_w:].copy()
        kernels[name] = ConvKernel(w, b)
        expected_offset = end
        total += n_w + c_out
    if expected_offset != len(blob):
        raise WeightValidationError(f"kernels cover {expected_offset} bytes of a "
                                    f"{len(blob)}-byte blob")
    if total != fields["params"]:
        raise WeightValidationError(f"kernel shapes sum to {total} params, "
                                    f"manifest declares {fields['params']}")
    try:
        pyramid = PyramidConfig(fields["pyramid"])
        return NetworkWeights(fields["channels"], fields["alpha"], pyramid, kernels)
    except ValueError as exc:
        raise WeightValidationError(str(exc)) from exc
