"""Image quality metrics: PSNR, MSE, SSIM, UCIQE, UIQM.

Full-reference metrics (PSNR/MSE/SSIM) take an aligned reference/test pair;
the no-reference underwater metrics (UCIQE/UIQM) score a single image.  All
functions expect RGB tensors in [0, 1], channel-first, as single images
(3, h, w) or singleton batches (1, 3, h, w), and compute in float64.

Conventions that affect absolute values (and therefore comparability with
other codebases) are pinned here: SSIM runs on BT.601 luminance with an
11x11 sigma-1.5 Gaussian window over valid positions only; UCIQE uses
CIELab (D65, sRGB transfer) with L/a/b scaled by 1/100 so the score lands in
the conventional 0-1 range, and mean HSV saturation; UIQM uses 0.1-trimmed
opponent-channel statistics, Sobel-weighted 8x8-block EME, and 8x8-block
PLIP logAMEE, with trailing partial blocks dropped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor_ops import ShapeError, SizeError

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # BT.601

UCIQE_COEFFS = (0.4680, 0.2745, 0.2576)
UIQM_COEFFS = (0.0282, 0.2953, 3.5753)
UIQM_TRIM_ALPHA = 0.1
UIQM_BLOCK = 8
PLIP_GAMMA = 1026.0


def _as_image(x: np.ndarray, name: str) -> np.ndarray:
    """Normalize to (c, h, w) float64."""
    x = np.asarray(x)
    if x.ndim == 4:
        if x.shape[0] != 1:
            raise ShapeError(f"{name} must be a single image, got batch {x.shape}")
        x = x[0]
    if x.ndim != 3:
        raise ShapeError(f"{name} must be (c, h, w) or (1, c, h, w), got {x.shape}")
    return x.astype(np.float64)


def _as_pair(ref, test):
    ref = _as_image(ref, "reference")
    test = _as_image(test, "test")
    if ref.shape != test.shape:
        raise ShapeError(f"reference shape {ref.shape} != test shape {test.shape}")
    return ref, test


def mse(ref: np.ndarray, test: np.ndarray) -> float:
    """Mean squared error over all pixels and channels, on the [0, 1] scale."""
    ref, test = _as_pair(ref, test)
    return float(np.mean((ref - test) ** 2))


def psnr(ref: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for identical inputs."""
    err = mse(ref, test)
    if err == 0.0:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / err)))


def luminance(img: np.ndarray) -> np.ndarray:
    """BT.601 luminance plane of a (3, h, w) image (or the plane of a 1-channel one)."""
    if img.shape[0] == 1:
        return img[0]
    if img.shape[0] != 3:
        raise ShapeError(f"expected 1 or 3 channels, got {img.shape}")
    r, g, b = LUMA_WEIGHTS
    return r * img[0] + g * img[1] + b * img[2]


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _filter_valid(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation of a (h, w) plane."""
    k = kernel.size
    h, w = x.shape
    rows = np.zeros((h - k + 1, w))
    for i in range(k):
        rows += kernel[i] * x[i:i + h - k + 1, :]
    out = np.zeros((h - k + 1, w - k + 1))
    for j in range(k):
        out += kernel[j] * rows[:, j:j + w - k + 1]
    return out


def ssim(ref: np.ndarray, test: np.ndarray) -> float:
    """Structural similarity on the luminance plane.

    Gaussian window 11x11 with sigma 1.5, K1=0.01, K2=0.03, dynamic range 1;
    the score is the mean local SSIM over all fully valid window positions.

    Raises
    ------
    SizeError
        If the image is smaller than the window.
    """
    ref, test = _as_pair(ref, test)
    x = luminance(ref)
    y = luminance(test)
    if min(x.shape) < SSIM_WINDOW:
        raise SizeError(f"image {x.shape} smaller than the {SSIM_WINDOW}x"
                        f"{SSIM_WINDOW} SSIM window")
    g = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    xx = _filter_valid(x * x, g) - mu_x * mu_x
    yy = _filter_valid(y * y, g) - mu_y * mu_y
    xy = _filter_valid(x * y, g) - mu_x * mu_y
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# UCIQE
# ---------------------------------------------------------------------------

_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def _srgb_linearize(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """sRGB (D65) to CIELab, with L, a, b scaled by 1/100."""
    lin = _srgb_linearize(img)
    xyz = np.tensordot(_SRGB_TO_XYZ, lin, axes=([1], [0]))
    xyz /= _D65_WHITE[:, None, None]
    delta = 6.0 / 29.0
    f = np.where(xyz > delta ** 3, np.cbrt(xyz), xyz / (3 * delta ** 2) + 4.0 / 29.0)
    l = 116.0 * f[1] - 16.0
    a = 500.0 * (f[0] - f[1])
    b = 200.0 * (f[1] - f[2])
    return np.stack([l, a, b]) / 100.0


def hsv_saturation(img: np.ndarray) -> np.ndarray:
    mx = img.max(axis=0)
    mn = img.min(axis=0)
    sat = np.zeros_like(mx)
    nz = mx > 0
    sat[nz] = (mx[nz] - mn[nz]) / mx[nz]
    return sat


def uciqe(image: np.ndarray) -> float:
    """Underwater color image quality: chroma spread, luminance contrast, saturation.

    Computed as ``0.4680 * std(chroma) + 0.2745 * conl + 0.2576 * mean(sat)``
    where chroma is the Lab chroma plane, ``conl`` is the mean of the top 1%
    minus the mean of the bottom 1% of L values, and ``sat`` is HSV
    saturation.  A constant gray image scores exactly 0.
    """
    img = _as_image(image, "image")
    if img.shape[0] != 3:
        raise ShapeError(f"uciqe needs an RGB image, got {img.shape}")
    lab = rgb_to_lab(img)
    chroma = np.hypot(lab[1], lab[2])
    sigma_c = float(np.std(chroma))
    l_sorted = np.sort(lab[0], axis=None)
    k = max(1, int(round(0.01 * l_sorted.size)))
    conl = float(np.mean(l_sorted[-k:]) - np.mean(l_sorted[:k]))
    mu_s = float(np.mean(hsv_saturation(img)))
    c1, c2, c3 = UCIQE_COEFFS
    return c1 * sigma_c + c2 * conl + c3 * mu_s


# ---------------------------------------------------------------------------
# UIQM
# ---------------------------------------------------------------------------

def _trimmed(x: np.ndarray, alpha: float) -> np.ndarray:
    s = np.sort(x, axis=None)
    t = int(alpha * s.size)
    if 2 * t >= s.size:
        return s
    return s[t:s.size - t]


def _uicm(img: np.ndarray) -> float:
    rg = img[0] - img[1]
    yb = (img[0] + img[1]) / 2.0 - img[2]
    rg_t = _trimmed(rg, UIQM_TRIM_ALPHA)
    yb_t = _trimmed(yb, UIQM_TRIM_ALPHA)
    mu_rg, mu_yb = rg_t.mean(), yb_t.mean()
    s2_rg = np.mean((rg_t - mu_rg) ** 2)
    s2_yb = np.mean((yb_t - mu_yb) ** 2)
    return float(-0.0268 * np.hypot(mu_rg, mu_yb) + 0.1586 * math.sqrt(s2_rg + s2_yb))


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def sobel_magnitude(plane: np.ndarray) -> np.ndarray:
    """Gradient magnitude with replicate padding (same size, flip-symmetric)."""
    p = np.pad(plane, 1, mode="edge")
    h, w = plane.shape
    gx = np.zeros_like(plane)
    gy = np.zeros_like(plane)
    for dy in range(3):
        for dx in range(3):
            win = p[dy:dy + h, dx:dx + w]
            gx += _SOBEL_X[dy, dx] * win
            gy += _SOBEL_X[dx, dy] * win
    return np.hypot(gx, gy)


def _blocks(plane: np.ndarray, size: int):
    """Full size x size blocks in row-major order; trailing partials dropped."""
    k2, k1 = plane.shape[0] // size, plane.shape[1] // size
    for i in range(k2):
        for j in range(k1):
            yield plane[i * size:(i + 1) * size, j * size:(j + 1) * size]


def _eme(plane: np.ndarray, size: int) -> float:
    k2, k1 = plane.shape[0] // size, plane.shape[1] // size
    total = 0.0
    for block in _blocks(plane, size):
        lo, hi = float(block.min()), float(block.max())
        if lo > 0 and hi > 0:
            total += math.log(hi / lo)
    return 2.0 / (k1 * k2) * total


def _uism(img: np.ndarray) -> float:
    value = 0.0
    for lam, plane in zip(LUMA_WEIGHTS, img):
        edges = sobel_magnitude(plane) * plane
        value += lam * _eme(edges, UIQM_BLOCK)
    return float(value)


def _logamee(plane: np.ndarray, size: int) -> float:
    k2, k1 = plane.shape[0] // size, plane.shape[1] // size
    g = PLIP_GAMMA
    s = 0.0
    for block in _blocks(plane, size):
        lo, hi = float(block.min()), float(block.max())
        top = g * (hi - lo) / (g - lo)
        bot = hi + lo - hi * lo / g
        if bot != 0.0 and top > 0.0:
            m = top / bot
            s += m * math.log(m)
    w = 1.0 / (k1 * k2)
    return float(g - g * (1.0 - s / g) ** w)


def uiqm(image: np.ndarray) -> float:
    """Underwater image quality: colorfulness (UICM), sharpness (UISM), contrast (UIConM).

    ``0.0282 * UICM + 0.2953 * UISM + 3.5753 * UIConM`` over 8x8 blocks.
    The image is first cropped to the largest top-left region that tiles
    exactly by 8x8, so trailing partial blocks contribute to no term and
    appending fewer than 8 rows or columns leaves the score unchanged.
    A constant gray image scores exactly 0.

    Raises
    ------
    SizeError
        If the image holds no complete 8x8 block.
    """
    img = _as_image(image, "image")
    if img.shape[0] != 3:
        raise ShapeError(f"uiqm needs an RGB image, got {img.shape}")
    if img.shape[1] < UIQM_BLOCK or img.shape[2] < UIQM_BLOCK:
        raise SizeError(f"image {img.shape} smaller than one "
                        f"{UIQM_BLOCK}x{UIQM_BLOCK} block")
    h8 = (img.shape[1] // UIQM_BLOCK) * UIQM_BLOCK
    w8 = (img.shape[2] // UIQM_BLOCK) * UIQM_BLOCK
    img = img[:, :h8, :w8]
    c1, c2, c3 = UIQM_COEFFS
    return (c1 * _uicm(img) + c2 * _uism(img)
            + c3 * _logamee(luminance(img), UIQM_BLOCK))


# ---------------------------------------------------------------------------
# Batch reports
# ---------------------------------------------------------------------------

@dataclass
class ImageScores:
    name: str
    psnr: float | None = None
    mse: float | None = None
    ssim: float | None = None
    uciqe: float | None = None
    uiqm: float | None = None

    def to_dict(self) -> dict:
        d = {"name": self.name}
        for key in ("psnr", "mse", "ssim", "uciqe", "uiqm"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d


@dataclass
class QualityReport:
    per_image: list[ImageScores] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def aggregates(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for key in ("psnr", "mse", "ssim", "uciqe", "uiqm"):
            values = [getattr(s, key) for s in self.per_image
                      if getattr(s, key) is not None]
            if values:
                arr = np.asarray(values, dtype=np.float64)
                out[key] = {"mean": float(arr.mean()), "stddev": float(arr.std())}
        return out

    def mean(self, key: str) -> float:
        agg = self.aggregates()
        if key not in agg:
            raise KeyError(f"no {key!r} values in this report")
        return agg[key]["mean"]

    def to_dict(self) -> dict:
        return {
            "per_image": [s.to_dict() for s in self.per_image],
            "aggregates": self.aggregates(),
            "skipped": list(self.skipped),
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def evaluate_pairs(ref_batch: np.ndarray, test_batch: np.ndarray,
                   names: list[str] | None = None,
                   no_reference: bool = True) -> QualityReport:
    """Full report over aligned (n, 3, h, w) batches."""
    if ref_batch.shape != test_batch.shape:
        raise ShapeError(f"batch shapes differ: {ref_batch.shape} vs "
                         f"{test_batch.shape}")
    report = QualityReport()
    for i in range(ref_batch.shape[0]):
        name = names[i] if names else f"image_{i:04d}"
        ref, test = ref_batch[i], test_batch[i]
        scores = ImageScores(
            name,
            psnr=psnr(ref, test),
            mse=mse(ref, test),
            ssim=ssim(ref, test),
        )
        if no_reference:
            scores.uciqe = uciqe(test)
            scores.uiqm = uiqm(test)
        report.per_image.append(scores)
    return report
