"""The two-stage enhancement network.

Architecture (channel width C, default 16):

    stem 3x3 (3 -> C)
      |-- color-branch block (4 independent 1x1 MLP branches)   \\  strong
      `-- scale pyramid (resize 32/64/128 -> 3x3 conv -> back)  /   prior
    spectral fusion of the two streams (FFT, 1x1 convs on the
    magnitude and phase planes, alpha-blend with the spatial sum)
    color-branch block -> pixel attention                      fine-grained
    head 3x3 (C -> 3), global residual, clamp to [0, 1]

Every block is written against the recording ops in ``autodiff``, so the
same forward serves plain-array inference and taped training.  The default
configuration lands at 8,780 trainable scalars.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .tensor_ops import ConvKernel, ShapeError

DEFAULT_CHANNELS = 16
DEFAULT_ALPHA = 0.4
DEFAULT_PYRAMID_SIZES = (32, 64, 128)

# The headline claim of the architecture: the assembled network must stay
# inside this trainable-scalar budget.
PARAM_BUDGET = (8000, 9500)


class PyramidConfig:
    """Ordered square target sizes for the scale-pyramid block."""

    def __init__(self, sizes=DEFAULT_PYRAMID_SIZES):
        sizes = tuple(int(s) for s in sizes)
        if not sizes:
            raise ValueError("pyramid needs at least one target size")
        if any(s < 2 for s in sizes):
            raise ValueError(f"pyramid sizes must be >= 2, got {sizes}")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"pyramid sizes must be strictly increasing, got {sizes}")
        self.sizes = sizes

    def __repr__(self):
        return f"PyramidConfig(sizes={self.sizes})"


class NetworkWeights:
    """Every convolution kernel of the network, in fixed iteration order.

    The kernel dict's insertion order is the serialization order, so two
    builds with the same configuration produce byte-identical weight files
    for identical values.  ``alpha`` is the spatial/frequency blend ratio; it
    is a hyperparameter, not a trained scalar.
    """

    def __init__(self, channels: int, alpha: float, pyramid: PyramidConfig,
                 kernels: dict[str, ConvKernel]):
        if channels < 4 or channels % 4 != 0:
            raise ValueError(f"channel width must be a positive multiple of 4, "
                             f"got {channels}")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        self.channels = channels
        self.alpha = float(alpha)
        self.pyramid = pyramid
        self.kernels = dict(kernels)

    @property
    def dtype(self):
        return next(iter(self.kernels.values())).weights.dtype

    def with_alpha(self, alpha: float) -> "NetworkWeights":
        return NetworkWeights(self.channels, alpha, self.pyramid, self.kernels)

    def astype(self, dtype) -> "NetworkWeights":
        return NetworkWeights(self.channels, self.alpha, self.pyramid,
                              {k: v.astype(dtype) for k, v in self.kernels.items()})

    def param_arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array view used by the trainer and the tape."""
        out = {}
        for name, k in self.kernels.items():
            out[f"{name}.w"] = k.weights
            out[f"{name}.b"] = k.bias
        return out

    def replace_params(self, arrays: dict[str, np.ndarray]) -> "NetworkWeights":
        kernels = {name: ConvKernel(arrays[f"{name}.w"], arrays[f"{name}.b"])
                   for name in self.kernels}
        return NetworkWeights(self.channels, self.alpha, self.pyramid, kernels)

    def block_param_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for name, k in self.kernels.items():
            block = name.split(".")[0]
            counts[block] = counts.get(block, 0) + k.param_count
        return counts


def _expected_kernel_shapes(channels: int, sizes) -> dict[str, tuple[int, int, int]]:
    """Name -> (c_out, c_in, k) for the standard assembly."""
    c = channels
    cq = c // 4
    shapes: dict[str, tuple[int, int, int]] = {"stem": (c, 3, 3)}
    for b in range(4):
        shapes[f"mcem1.b{b}.c1"] = (cq, cq, 1)
        shapes[f"mcem1.b{b}.c2"] = (cq, cq, 1)
    for s in sizes:
        shapes[f"mpm.s{s}"] = (c, c, 3)
    shapes["sdfim.mag"] = (c, c, 1)
    shapes["sdfim.pha"] = (c, c, 1)
    for b in range(4):
        shapes[f"mcem2.b{b}.c1"] = (cq, cq, 1)
        shapes[f"mcem2.b{b}.c2"] = (cq, cq, 1)
    squeeze = max(c // 4, 1)
    shapes["pa.squeeze"] = (squeeze, c, 1)
    shapes["pa.excite"] = (1, squeeze, 1)
    shapes["head"] = (3, c, 3)
    return shapes


def default_network(seed: int = 0, channels: int = DEFAULT_CHANNELS,
                    alpha: float = DEFAULT_ALPHA,
                    pyramid_sizes=DEFAULT_PYRAMID_SIZES,
                    dtype=np.float32) -> NetworkWeights:
    """Freshly initialized network: Kaiming-uniform convs, zeroed head.

    The zero head makes the whole network the identity map at
    initialization, which is the stable starting point for the residual
    formulation.
    """
    pyramid = PyramidConfig(pyramid_sizes)
    rng = np.random.default_rng(seed)
    kernels: dict[str, ConvKernel] = {}
    for name, (c_out, c_in, k) in _expected_kernel_shapes(channels, pyramid.sizes).items():
        if name == "head":
            w = np.zeros((c_out, c_in, k, k), dtype=dtype)
        else:
            bound = math.sqrt(6.0 / (c_in * k * k))
            w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(dtype)
        b = np.zeros(c_out, dtype=dtype)
        kernels[name] = ConvKernel(w, b)
    return NetworkWeights(channels, alpha, pyramid, kernels)


# ---------------------------------------------------------------------------
# Block forwards (polymorphic over arrays and traced values)
# ---------------------------------------------------------------------------

def color_branches_forward(x, params, prefix: str):
    """Four weight-independent per-pixel 1x1 MLP branches with a residual.

    Built purely from 1x1 convolutions, so the block commutes with any
    spatial permutation of its input.
    """
    parts = ad.split_channels(x, 4)
    outs = []
    for i, part in enumerate(parts):
        h = ad.relu(ad.conv2d(part, *params(f"{prefix}.b{i}.c1")))
        outs.append(ad.conv2d(h, *params(f"{prefix}.b{i}.c2")))
    return ad.add(ad.concat_channels(outs), x)


def pyramid_forward(x, params, sizes):
    """Per-scale resize -> 3x3 conv -> ReLU -> resize back, summed residually."""
    h, w = x.shape[2], x.shape[3]
    acc = None
    for s in sizes:
        down = ad.bilinear_resize(x, s, s)
        feat = ad.relu(ad.conv2d(down, *params(f"mpm.s{s}")))
        up = ad.bilinear_resize(feat, h, w)
        acc = up if acc is None else ad.add(acc, up)
    return ad.add(acc, x)


def spectral_fusion_forward(x, y, params, alpha: float):
    """Blend the spatial sum of two streams with its frequency-domain rework.

    The summed features go through the half-spectrum transform; a 1x1
    convolution mixes channels at every frequency bin of the magnitude
    planes (ReLU'd, magnitudes are nonnegative) and another mixes the phase
    planes (left unactivated, phase is angular).  The synthesized spatial
    tensor is blended with the plain sum at ratio ``alpha``.
    """
    f = ad.add(x, y)
    h, w = f.shape[2], f.shape[3]
    mag, pha = ad.rfft2(f)
    mag = ad.relu(ad.conv2d(mag, *params("sdfim.mag")))
    pha = ad.conv2d(pha, *params("sdfim.pha"))
    spatial = ad.irfft2(mag, pha, h, w)
    return ad.add(ad.scale(spatial, alpha), ad.scale(f, 1.0 - alpha))


def pixel_attention_forward(x, params):
    """Single-channel sigmoid gate multiplied across all channels."""
    g = ad.conv2d(ad.relu(ad.conv2d(x, *params("pa.squeeze"))), *params("pa.excite"))
    gate = ad.sigmoid(g)
    tiled = ad.concat_channels([gate] * x.shape[1])
    return ad.mul(x, tiled)


def network_forward(image, params, alpha: float, sizes):
    """Full two-stage forward; output = clamp(image + head(features))."""
    if image.shape[1] != 3:
        raise ShapeError(f"expected a 3-channel image tensor, got shape {image.shape}")
    feat = ad.conv2d(image, *params("stem"))
    color = color_branches_forward(feat, params, "mcem1")
    scales = pyramid_forward(feat, params, sizes)
    fused = spectral_fusion_forward(color, scales, params, alpha)
    fine = color_branches_forward(fused, params, "mcem2")
    gated = pixel_attention_forward(fine, params)
    residual = ad.conv2d(gated, *params("head"))
    return ad.clamp01(ad.add(image, residual))


def _array_params(weights: NetworkWeights):
    def get(name: str):
        k = weights.kernels[name]
        return k.weights, k.bias

    return get


def enhance(image: np.ndarray, weights: NetworkWeights,
            alpha: float | None = None) -> np.ndarray:
    """Run the network on a plain (n, 3, h, w) image batch in [0, 1]."""
    a = weights.alpha if alpha is None else float(alpha)
    w = weights
    if image.dtype != w.dtype:
        w = w.astype(image.dtype)
    return network_forward(image, _array_params(w), a, w.pyramid.sizes)


def traced_forward(image, param_vars: dict, weights: NetworkWeights,
                   alpha: float | None = None):
    """Forward over tape variables; ``param_vars`` keys match param_arrays()."""
    a = weights.alpha if alpha is None else float(alpha)

    def get(name: str):
        return param_vars[f"{name}.w"], param_vars[f"{name}.b"]

    return network_forward(image, get, a, weights.pyramid.sizes)


# ---------------------------------------------------------------------------
# Budget accounting
# ---------------------------------------------------------------------------

def count_params(weights: NetworkWeights) -> int:
    """Exact number of trainable scalars across all kernels."""
    return sum(k.param_count for k in weights.kernels.values())


def gflops_breakdown(weights: NetworkWeights, h: int, w: int) -> dict[str, float]:
    """Analytic flop count for one (1, 3, h, w) forward pass, in GFLOPs.

    Convolutions are counted as 2 flops per multiply-accumulate at the
    resolution each kernel actually runs at: pyramid kernels at their fixed
    square sizes (resolution-independent), the spectral-fusion kernels over
    the h x (w//2 + 1) frequency bins, everything else over h x w.  The two
    transforms are charged 5*N*log2(N) real flops per length-N 1-D transform.
    Interpolation and pointwise costs are excluded.
    """
    full = h * w
    bins = h * (w // 2 + 1)
    spatial_macs = 0
    pyramid_macs = 0
    spectral_macs = 0
    for name, k in weights.kernels.items():
        per_pixel = k.c_out * k.c_in * k.ksize * k.ksize
        if name.startswith("mpm.s"):
            s = int(name.split("mpm.s")[1])
            pyramid_macs += per_pixel * s * s
        elif name.startswith("sdfim."):
            spectral_macs += per_pixel * bins
        else:
            spatial_macs += per_pixel * full
    fft_flops = 0.0
    if any(name.startswith("sdfim.") for name in weights.kernels):
        c = weights.channels
        row = h * 5.0 * w * math.log2(w) if w > 1 else 0.0
        col = (w // 2 + 1) * 5.0 * h * math.log2(h) if h > 1 else 0.0
        fft_flops = 2.0 * c * (row + col)  # forward + inverse transform
    out = {
        "spatial_conv": 2.0 * spatial_macs / 1e9,
        "pyramid_conv": 2.0 * pyramid_macs / 1e9,
        "spectral_conv": 2.0 * spectral_macs / 1e9,
        "fft": fft_flops / 1e9,
    }
    out["resolution_dependent_conv"] = out["spatial_conv"] + out["spectral_conv"]
    out["total"] = (out["spatial_conv"] + out["pyramid_conv"]
                    + out["spectral_conv"] + out["fft"])
    return out


def count_gflops(weights: NetworkWeights, h: int, w: int) -> float:
    """Total analytic GFLOPs of one forward pass at h x w."""
    return gflops_breakdown(weights, h, w)["total"]
