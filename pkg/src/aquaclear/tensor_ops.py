"""Core tensor kernels: convolution, resizing, activations, spectra.

Tensors are plain numpy arrays in (batch, channels, height, width) layout,
float32 by default with a float64 path for verification work.  Every
operation here is a pure function; nothing mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fft


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ArityError(ValueError):
    """A channel split/group count does not divide the operand."""


class SizeError(ValueError):
    """An image is too small for the requested window or block size."""


FLOAT_DTYPES = (np.float32, np.float64)


def ensure_nchw(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ShapeError(f"{name} must be a rank-4 (n, c, h, w) array, got "
                         f"{getattr(x, 'shape', type(x))}")
    if x.dtype not in FLOAT_DTYPES:
        x = x.astype(np.float32)
    return x


@dataclass(frozen=True)
class ConvKernel:
    """Weights (c_out, c_in, k, k) and bias (c_out,) of one convolution."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w, b = self.weights, self.bias
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"conv weights must be (c_out, c_in, k, k), got {w.shape}")
        if w.shape[2] not in (1, 3):
            raise ShapeError(f"kernel size must be 1 or 3, got {w.shape[2]}")
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ShapeError(f"conv channel counts must be >= 1, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"bias shape {b.shape} does not match c_out={w.shape[0]}")

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def ksize(self) -> int:
        return self.weights.shape[2]

    @property
    def param_count(self) -> int:
        return self.weights.size + self.bias.size

    def astype(self, dtype) -> "ConvKernel":
        return ConvKernel(self.weights.astype(dtype), self.bias.astype(dtype))


@dataclass(frozen=True)
class SpectralPair:
    """Magnitude and phase planes of a half-spectrum, shape (n, c, h, w//2+1).

    As produced by :func:`rfft2` the magnitude is nonnegative and the phase
    lies in (-pi, pi].  Downstream processing (e.g. spectral convolutions)
    may hand modified planes back to :func:`irfft2`, which accepts arbitrary
    values; only the plane shapes are enforced here.
    """

    magnitude: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        if self.magnitude.shape != self.phase.shape:
            raise ShapeError(f"magnitude shape {self.magnitude.shape} != "
                             f"phase shape {self.phase.shape}")
        if self.magnitude.ndim != 4:
            raise ShapeError(f"spectral planes must be rank-4, got {self.magnitude.shape}")


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

# Cap on one im2col buffer, in elements; larger inputs go through row slabs.
_COL_BUDGET = 1 << 24


def _col_slabs(xp: np.ndarray, h: int, w: int):
    """Yield (image, row0, rows, cols) im2col slabs of a padded input."""
    n, ci = xp.shape[0], xp.shape[1]
    rows_per = max(1, _COL_BUDGET // (ci * 9 * w))
    cols = None
    for ni in range(n):
        for y0 in range(0, h, rows_per):
            hh = min(rows_per, h - y0)
            if cols is None or cols.shape[2] != hh:
                cols = np.empty((ci, 9, hh, w), dtype=xp.dtype)
            for dy in range(3):
                for dx in range(3):
                    cols[:, dy * 3 + dx] = xp[ni, :, y0 + dy:y0 + dy + hh, dx:dx + w]
            yield ni, y0, hh, cols


def _conv3_apply(x: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """3x3 same-padding convolution as one gemm per im2col slab."""
    n, ci, h, w = x.shape
    co = w2.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.empty((n, co, h, w), dtype=x.dtype)
    for ni, y0, hh, cols in _col_slabs(xp, h, w):
        res = w2 @ cols.reshape(ci * 9, hh * w)
        out[ni, :, y0:y0 + hh] = res.reshape(co, hh, w)
    return out


def conv2d_raw(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Convolution on raw arrays; stride 1, zero padding (k-1)/2."""
    x = ensure_nchw(x, "conv input")
    k = weights.shape[2]
    if x.shape[1] != weights.shape[1]:
        raise ShapeError(f"conv input has {x.shape[1]} channels (shape {x.shape}) but "
                         f"kernel expects {weights.shape[1]} (shape {weights.shape})")
    if k == 1:
        out = np.tensordot(weights[:, :, 0, 0], x, axes=([1], [1]))
        out = np.ascontiguousarray(np.moveaxis(out, 0, 1))
    else:
        out = _conv3_apply(x, weights.reshape(weights.shape[0], -1))
    out += bias.reshape(1, -1, 1, 1)
    return out


def conv2d(x: np.ndarray, kernel: ConvKernel) -> np.ndarray:
    """2-D convolution with stride 1 and same-size zero padding."""
    return conv2d_raw(x, kernel.weights.astype(x.dtype, copy=False),
                      kernel.bias.astype(x.dtype, copy=False))


def conv2d_backward(x: np.ndarray, weights: np.ndarray, grad: np.ndarray):
    """Gradients (dx, dw, db) of ``conv2d_raw`` given upstream ``grad``."""
    k = weights.shape[2]
    n, ci, h, w = x.shape
    co = weights.shape[0]
    db = grad.sum(axis=(0, 2, 3))
    if k == 1:
        dw = np.tensordot(grad, x, axes=([0, 2, 3], [0, 2, 3]))[:, :, None, None]
        dx = np.moveaxis(np.tensordot(weights[:, :, 0, 0].T, grad, axes=([1], [1])), 0, 1)
        return np.ascontiguousarray(dx), dw, db
    # dW: gradient x im2col(x), accumulated over slabs.
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dw2 = np.zeros((co, ci * 9), dtype=np.promote_types(x.dtype, grad.dtype))
    for ni, y0, hh, cols in _col_slabs(xp, h, w):
        g_slab = grad[ni, :, y0:y0 + hh].reshape(co, hh * w)
        dw2 += g_slab @ cols.reshape(ci * 9, hh * w).T
    dw = dw2.reshape(co, ci, 3, 3).astype(weights.dtype, copy=False)
    # dX: correlation of the gradient with the spatially flipped,
    # channel-transposed kernel, under the same zero padding.
    wt = np.ascontiguousarray(weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dx = _conv3_apply(grad, wt.reshape(ci, -1))
    return dx, dw, db


# ---------------------------------------------------------------------------
# Bilinear resize (half-pixel centers, align-corners off)
# ---------------------------------------------------------------------------

_resize_axis_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
_resize_adjoint_cache: dict[tuple[int, int], np.ndarray] = {}


def _resize_axis_plan(in_size: int, out_size: int):
    """Source indices (i0, i1) and blend weight toward i1 for one axis."""
    plan = _resize_axis_cache.get((in_size, out_size))
    if plan is not None:
        return plan
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, in_size - 1)
    frac = src - i0
    plan = (i0, i1, frac)
    _resize_axis_cache[(in_size, out_size)] = plan
    return plan


def _resize_adjoint_matrix(in_size: int, out_size: int) -> np.ndarray:
    """Dense (in, out) adjoint of the one-axis interpolation operator."""
    mat = _resize_adjoint_cache.get((in_size, out_size))
    if mat is not None:
        return mat
    i0, i1, frac = _resize_axis_plan(in_size, out_size)
    r = np.zeros((out_size, in_size), dtype=np.float64)
    np.add.at(r, (np.arange(out_size), i0), 1.0 - frac)
    np.add.at(r, (np.arange(out_size), i1), frac)
    mat = np.ascontiguousarray(r.T)
    _resize_adjoint_cache[(in_size, out_size)] = mat
    return mat


def bilinear_resize(x: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resample to (target_h, target_w) using half-pixel centers.

    Output values are convex combinations of the four nearest source pixels,
    so the result never leaves the input's value range, and resizing to the
    identical size reproduces the input exactly.
    """
    x = ensure_nchw(x, "resize input")
    if target_h < 1 or target_w < 1:
        raise ShapeError(f"target size must be positive, got {target_h}x{target_w}")
    n, c, h, w = x.shape
    if (h, w) == (target_h, target_w):
        return x.copy()
    out = x
    if target_h != h:
        y0, y1, fy = _resize_axis_plan(h, target_h)
        fy = fy.astype(x.dtype)[:, None]
        lo = out[:, :, y0, :]
        hi = out[:, :, y1, :]
        hi -= lo
        hi *= fy
        hi += lo
        out = hi
    if target_w != w:
        x0, x1, fx = _resize_axis_plan(w, target_w)
        fx = fx.astype(x.dtype)
        lo = out[:, :, :, x0]
        hi = out[:, :, :, x1]
        hi -= lo
        hi *= fx
        hi += lo
        out = hi
    return np.ascontiguousarray(out)


def bilinear_resize_backward(grad: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Adjoint of :func:`bilinear_resize`: scatter of interpolation weights."""
    n, c, out_h, out_w = grad.shape
    if (in_h, in_w) == (out_h, out_w):
        return grad.copy()
    ry = _resize_adjoint_matrix(in_h, out_h).astype(grad.dtype)
    rx = _resize_adjoint_matrix(in_w, out_w).astype(grad.dtype)
    g = np.tensordot(grad, rx, axes=([3], [1]))        # (n, c, out_h, in_w)
    g = np.tensordot(ry, g, axes=([1], [2]))           # (in_h, n, c, in_w)
    return np.ascontiguousarray(np.moveaxis(g, 0, 2))


# ---------------------------------------------------------------------------
# Elementwise ops and channel routing
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_same_shape(a: np.ndarray, b: np.ndarray, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op} requires identical shapes, got {a.shape} and {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(a, b, "add")
    return a + b


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(a, b, "mul")
    return a * b


def clamp01(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


def concat_channels(parts: list[np.ndarray]) -> np.ndarray:
    if not parts:
        raise ShapeError("concat_channels needs at least one tensor")
    base = parts[0].shape
    for p in parts[1:]:
        if p.shape[0] != base[0] or p.shape[2:] != base[2:]:
            raise ShapeError(f"concat_channels requires matching (n, h, w); got "
                             f"{base} and {p.shape}")
    return np.concatenate(parts, axis=1)


def split_channels(x: np.ndarray, groups: int) -> list[np.ndarray]:
    x = ensure_nchw(x, "split input")
    c = x.shape[1]
    if groups < 1 or c % groups != 0:
        raise ArityError(f"cannot split {c} channels into {groups} equal groups")
    step = c // groups
    return [np.ascontiguousarray(x[:, i * step:(i + 1) * step]) for i in range(groups)]


# ---------------------------------------------------------------------------
# Real 2-D FFT as magnitude/phase
# ---------------------------------------------------------------------------

def _to_mag_phase(z: np.ndarray, dtype) -> SpectralPair:
    mag = np.abs(z)
    pha = np.angle(z)
    # np.angle yields [-pi, pi]; normalize the closed end to keep (-pi, pi].
    pha[pha == -np.pi] = np.pi
    return SpectralPair(mag.astype(dtype), pha.astype(dtype))


def rfft2(x: np.ndarray) -> SpectralPair:
    """Per-channel unnormalized 2-D DFT of a real tensor.

    Returns the non-redundant half-spectrum of width w//2 + 1 as magnitude
    and phase planes in the input's dtype.
    """
    x = ensure_nchw(x, "rfft2 input")
    z = fft.rfft2_complex(x)
    return _to_mag_phase(z, x.dtype)


def irfft2(spec: SpectralPair, out_h: int, out_w: int) -> np.ndarray:
    """Inverse of :func:`rfft2` with 1/(h·w) normalization."""
    mag, pha = spec.magnitude, spec.phase
    expect = (out_h, out_w // 2 + 1)
    if mag.shape[2:] != expect:
        raise ShapeError(f"spectral planes {mag.shape} inconsistent with output "
                         f"{out_h}x{out_w} (expected trailing {expect})")
    cdtype = fft.complex_dtype_for(mag.dtype)
    # cos/sin rather than exp(1j*pha): keeps this path bit-identical to the
    # recorded one in autodiff, which needs the trig planes for its adjoint.
    z = (mag * (np.cos(pha) + 1j * np.sin(pha))).astype(cdtype, copy=False)
    y = fft.irfft2_complex(z, out_h, out_w)
    return y.astype(mag.dtype, copy=False)
