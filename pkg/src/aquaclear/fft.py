"""Discrete Fourier transforms for the tensor kernels.

All transforms are computed along the last axis of a complex array and are
vectorized over every leading axis.  Power-of-two lengths go through an
iterative radix-2 butterfly; every other length uses Bluestein's chirp-z
algorithm, which reduces an arbitrary-length DFT to a power-of-two cyclic
convolution.  The forward transform is unnormalized; callers that need an
inverse apply the 1/N factor themselves (see ``irfft2`` in tensor_ops).

Precision follows the caller: float32 pipelines run in complex64, the
float64 verification path in complex128.  Plans (bit-reversal permutations,
twiddles, chirp spectra) are cached per length and dtype; twiddles are
evaluated in double precision before any downcast.
"""

from __future__ import annotations

import numpy as np

# Workspace cap for one vectorized transform batch, in elements.
# 2**22 complex128 elements = 64 MiB; larger batches run in slabs.
_CHUNK_ELEMS = 1 << 22

_pow2_plans: dict[tuple[int, type], tuple[np.ndarray, list[np.ndarray]]] = {}
_bluestein_plans: dict[tuple[int, int, type], tuple[int, np.ndarray, np.ndarray]] = {}


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def complex_dtype_for(dtype) -> np.dtype:
    return np.dtype(np.complex64 if np.dtype(dtype) == np.float32 else np.complex128)


def _pow2_plan(n: int, cdtype) -> tuple[np.ndarray, list[np.ndarray]]:
    """Bit-reversal permutation and per-stage forward twiddles for n = 2**k."""
    key = (n, cdtype.type)
    plan = _pow2_plans.get(key)
    if plan is not None:
        return plan
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    twiddles = []
    m = 2
    while m <= n:
        half = m // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / m)
        twiddles.append(tw.astype(cdtype))
        m *= 2
    _pow2_plans[key] = (rev, twiddles)
    return rev, twiddles


def _fft_pow2(x: np.ndarray, sign: int) -> np.ndarray:
    """Unnormalized radix-2 FFT along the last axis; sign=-1 forward, +1 inverse."""
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    rev, twiddles = _pow2_plan(n, x.dtype)
    a = np.ascontiguousarray(x[..., rev])
    flat = a.reshape(-1, n)
    stage_m = 2
    for tw in twiddles:
        half = stage_m // 2
        w = tw if sign < 0 else np.conj(tw)
        v = flat.reshape(-1, n // stage_m, stage_m)
        even = v[..., :half]
        odd = v[..., half:]
        t = odd * w
        np.subtract(even, t, out=odd)
        even += t
        stage_m *= 2
    return a


def _bluestein_plan(n: int, sign: int, cdtype) -> tuple[int, np.ndarray, np.ndarray]:
    key = (n, sign, cdtype.type)
    plan = _bluestein_plans.get(key)
    if plan is not None:
        return plan
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp argument small and exactly periodic; the
    # chirp and kernel spectrum are built in double precision, then stored in
    # the working dtype.
    chirp = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    if n > 1:
        b[m - (n - 1):] = np.conj(chirp[1:])[::-1]
    b_spec = _fft_pow2(b, -1) / m
    plan = (m, chirp.astype(cdtype), b_spec.astype(cdtype))
    _bluestein_plans[key] = plan
    return plan


def _fft_bluestein(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-1]
    m, chirp, b_spec = _bluestein_plan(n, sign, x.dtype)
    a = np.zeros(x.shape[:-1] + (m,), dtype=x.dtype)
    a[..., :n] = x * chirp
    conv = _fft_pow2(_fft_pow2(a, -1) * b_spec, +1)
    conv = conv[..., :n]
    conv *= chirp
    return conv


def fft1d(x: np.ndarray, sign: int = -1) -> np.ndarray:
    """Unnormalized DFT of complex data along the last axis.

    sign=-1 is the forward transform exp(-2πi kn/N); sign=+1 is the
    unnormalized inverse (conjugate) transform.  Arbitrary lengths are
    supported; non-power-of-two lengths take the Bluestein path.
    """
    n = x.shape[-1]
    if not np.iscomplexobj(x):
        x = x.astype(complex_dtype_for(x.dtype))
    rows = int(np.prod(x.shape[:-1], dtype=np.int64)) if x.ndim > 1 else 1
    kernel = _fft_pow2 if _is_pow2(n) else _fft_bluestein
    # Bluestein pads to >= 2n, so budget rows against the padded length.
    padded = n if _is_pow2(n) else (1 << (2 * n - 1).bit_length())
    rows_per_slab = max(1, _CHUNK_ELEMS // max(padded, 1))
    if rows <= rows_per_slab:
        return kernel(x, sign)
    flat = x.reshape(rows, n)
    out = np.empty_like(flat)
    for start in range(0, rows, rows_per_slab):
        stop = min(start + rows_per_slab, rows)
        out[start:stop] = kernel(flat[start:stop], sign)
    return out.reshape(x.shape)


def fft_axis(x: np.ndarray, axis: int, sign: int = -1) -> np.ndarray:
    """DFT along an arbitrary axis (moves it last, transforms, moves back)."""
    if axis in (-1, x.ndim - 1):
        return fft1d(x, sign)
    moved = np.moveaxis(x, axis, -1)
    return np.moveaxis(fft1d(np.ascontiguousarray(moved), sign), -1, axis)


def rfft2_complex(x: np.ndarray) -> np.ndarray:
    """Half-spectrum 2-D DFT of a real (..., h, w) array.

    Returns the unnormalized complex spectrum of shape (..., h, w//2 + 1):
    the full transform along the width axis truncated to the non-redundant
    half, then a full-length transform along the height axis.
    """
    w = x.shape[-1]
    z = fft1d(x.astype(complex_dtype_for(x.dtype)), -1)[..., : w // 2 + 1]
    return fft_axis(np.ascontiguousarray(z), -2, -1)


def hermitian_extend(z: np.ndarray, out_w: int) -> np.ndarray:
    """Rebuild a full-width spectrum from its half, forcing conjugate symmetry."""
    half = out_w // 2 + 1
    full = np.empty(z.shape[:-1] + (out_w,), dtype=z.dtype)
    full[..., :half] = z
    if half < out_w:
        mirror = np.arange(half, out_w)
        full[..., mirror] = np.conj(z[..., out_w - mirror])
    return full


def irfft2_complex(z: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Real inverse of ``rfft2_complex`` with 1/(h·w) normalization.

    Accepts arbitrary half-spectra: conjugate symmetry is imposed (the half
    stored in ``z`` is authoritative) and any residual imaginary part of the
    synthesis is discarded.
    """
    t = fft_axis(z, -2, +1)
    full = hermitian_extend(t, out_w)
    y = fft1d(full, +1)
    return y.real / (out_h * out_w)


def hermitian_fold(g_full: np.ndarray, out_w: int) -> np.ndarray:
    """Adjoint of ``hermitian_extend``: fold mirrored bins back onto the half."""
    half = out_w // 2 + 1
    g = g_full[..., :half].copy()
    if half < out_w:
        mirror = np.arange(half, out_w)
        # out_w - mirror enumerates distinct interior bins, so a plain
        # fancy-index accumulate is safe.
        g[..., out_w - mirror] += np.conj(g_full[..., mirror])
    return g
