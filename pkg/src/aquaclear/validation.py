"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .tensor_ops import ShapeError

_RANGE_SLACK = 1e-3


def as_image_batch(X, name: str = "X", dtype=np.float32) -> np.ndarray:
    """Coerce to a (n, 3, h, w) float batch in [0, 1].

    Accepts a single image or a batch, channel-first or channel-last
    (channel-first wins when both axes have size 3), and a list of images.
    Values must already be normalized; uint8 inputs are scaled by 1/255.
    """
    if isinstance(X, (list, tuple)):
        X = np.stack([np.asarray(x) for x in X])
    X = np.asarray(X)
    if X.dtype == np.uint8:
        X = X.astype(dtype) / dtype(255)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise ShapeError(f"{name} must be image-shaped (got ndim={X.ndim}); "
                         "expected (n, 3, h, w), (3, h, w), or channel-last "
                         "equivalents")
    if X.shape[1] != 3:
        if X.shape[3] == 3:
            X = X.transpose(0, 3, 1, 2)
        else:
            raise ShapeError(f"{name} has no 3-wide channel axis: {X.shape}")
    X = np.ascontiguousarray(X, dtype=dtype)
    lo, hi = float(X.min()), float(X.max())
    if lo < -_RANGE_SLACK or hi > 1.0 + _RANGE_SLACK:
        hint = " (divide 8-bit data by 255 first)" if hi > 2.0 else ""
        raise ValueError(f"{name} values must lie in [0, 1], got range "
                         f"[{lo:.4g}, {hi:.4g}]{hint}")
    return np.clip(X, 0.0, 1.0)


def check_paired(X: np.ndarray, y: np.ndarray) -> None:
    if X.shape != y.shape:
        raise ShapeError(f"degraded batch {X.shape} and clean batch {y.shape} "
                         "must have identical shapes")
