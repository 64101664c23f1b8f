"""Synthetic underwater degradation and paired training data.

The degradation model is Beer-Lambert attenuation toward a veiling light:

    out_c = clean_c * exp(-beta_c * d) + background_c * (1 - exp(-beta_c * d))

with per-channel attenuation coefficients ordered red > green >= blue, so red
content fades first and the result takes on the blue-green cast typical of
water.  Clean sources are procedurally generated (smooth color fields,
geometric shapes, light texture noise), which keeps the training and
acceptance pipelines free of external datasets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_ops import bilinear_resize

DEPTH_MODES = ("constant", "vertical-ramp")


class ParameterError(ValueError):
    """Degradation parameters violate their invariants."""


@dataclass(frozen=True)
class DegradeParams:
    """Physical knobs of the attenuation model.

    ``depth_mode="constant"`` uses the midpoint of ``depth_range`` for every
    pixel; ``"vertical-ramp"`` sweeps linearly from depth_range[0] at the top
    row to depth_range[1] at the bottom row.
    """

    beta: tuple[float, float, float] = (1.0, 0.35, 0.25)
    background: tuple[float, float, float] = (0.10, 0.60, 0.70)
    depth_mode: str = "constant"
    depth_range: tuple[float, float] = (0.5, 2.5)
    seed: int = 0

    def __post_init__(self):
        br, bg, bb = self.beta
        # All-zero attenuation (no water at all) is allowed as the degenerate
        # pass-through; otherwise red must attenuate strictly fastest.
        if any(b < 0 for b in self.beta):
            raise ParameterError(f"attenuation coefficients must be >= 0, "
                                 f"got {self.beta}")
        if any(self.beta) and not (br > bg >= bb):
            raise ParameterError(f"attenuation must satisfy red > green >= blue, "
                                 f"got {self.beta}")
        if any(not 0.0 <= c <= 1.0 for c in self.background):
            raise ParameterError(f"background light must lie in [0, 1], "
                                 f"got {self.background}")
        lo, hi = self.depth_range
        if lo < 0 or hi < lo:
            raise ParameterError(f"depth range needs 0 <= min <= max, "
                                 f"got {self.depth_range}")
        if self.depth_mode not in DEPTH_MODES:
            raise ParameterError(f"depth_mode must be one of {DEPTH_MODES}, "
                                 f"got {self.depth_mode!r}")

    def to_dict(self) -> dict:
        return {
            "beta": list(self.beta),
            "background": list(self.background),
            "depth_mode": self.depth_mode,
            "depth_range": list(self.depth_range),
            "seed": self.seed,
        }


def _depth_map(params: DegradeParams, h: int) -> np.ndarray:
    """Per-row depth, shape (h, 1)."""
    lo, hi = params.depth_range
    if params.depth_mode == "constant" or h == 1:
        d = np.full(h, (lo + hi) / 2.0)
    else:
        d = lo + (hi - lo) * np.arange(h) / (h - 1)
    return d[:, None]


def degrade(clean: np.ndarray, params: DegradeParams) -> np.ndarray:
    """Apply the attenuation model to a (n, 3, h, w) batch in [0, 1]."""
    if clean.ndim != 4 or clean.shape[1] != 3:
        raise ParameterError(f"expected a (n, 3, h, w) batch, got {clean.shape}")
    dtype = clean.dtype
    d = _depth_map(params, clean.shape[2])
    beta = np.asarray(params.beta)[:, None, None]
    bg = np.asarray(params.background)[:, None, None]
    t = np.exp(-beta * d)
    out = clean * t.astype(dtype) + (bg * (1.0 - t)).astype(dtype)
    return np.clip(out, 0.0, 1.0).astype(dtype, copy=False)


def synthesize_clean(size: int, rng: np.random.Generator) -> np.ndarray:
    """One procedural (3, size, size) clean image in [0, 1].

    A low-resolution random color field is upsampled for smooth large-scale
    structure; random rectangles and disks add hard edges; a little noise
    adds texture.  The composition keeps meaningful content for both the
    full-reference and the block-statistics metrics.
    """
    coarse = rng.random((1, 3, 4, 4))
    img = bilinear_resize(coarse, size, size)[0]
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(rng.integers(3, 7)):
        color = rng.random(3)[:, None, None]
        if rng.random() < 0.5:
            y0, x0 = rng.integers(0, size, 2)
            hh, ww = rng.integers(size // 8, size // 2, 2)
            mask = (yy >= y0) & (yy < y0 + hh) & (xx >= x0) & (xx < x0 + ww)
        else:
            cy, cx = rng.integers(0, size, 2)
            r = rng.integers(size // 10, size // 3)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        blend = rng.uniform(0.5, 1.0)
        img = np.where(mask, (1 - blend) * img + blend * color, img)
    img += rng.normal(0.0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0)


@dataclass
class PairSet:
    """Aligned clean/degraded batches plus the recipe that produced them.

    ``params`` is None for user-supplied pairs that did not come out of
    :func:`make_pairs`.
    """

    clean: np.ndarray
    degraded: np.ndarray
    params: DegradeParams | None = None
    seed: int = 0
    start_index: int = 0
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.clean.shape[0]


def make_pairs(count: int, size: int, params: DegradeParams | None = None,
               seed: int = 0, start_index: int = 0,
               dtype=np.float32) -> PairSet:
    """Deterministic paired dataset of ``count`` images at size x size.

    Image ``i`` is drawn from an RNG stream keyed by (seed, start_index + i),
    so subsets are reproducible independently of generation order and a
    held-out split is just a different index range.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if size < 32:
        raise ParameterError(f"size must be >= 32, got {size}")
    params = params or DegradeParams(seed=seed)
    clean = np.empty((count, 3, size, size), dtype=dtype)
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((seed, start_index + i)))
        clean[i] = synthesize_clean(size, rng)
    degraded = degrade(clean, params)
    return PairSet(clean, degraded, params, seed, start_index)
