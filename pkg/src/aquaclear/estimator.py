"""scikit-learn style front door for the enhancement engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import metrics, network, weights_io
from .degradation import PairSet
from .training import TrainConfig, train
from .validation import as_image_batch, check_paired


class UnderwaterImageEnhancer(BaseEstimator, TransformerMixin):
    """Trainable underwater image enhancer with a fit/transform interface.

    ``fit(X, y)`` trains the ~9K-parameter network on degraded images ``X``
    against clean references ``y``; ``transform(X)`` (or ``predict``)
    enhances a batch.  Images are (n, 3, h, w) float arrays in [0, 1];
    channel-last and uint8 inputs are converted by the validators.

    Parameters mirror the training configuration.  ``weights_path`` warm
    starts ``fit`` from a FANW1 file and also lets ``transform`` run without
    fitting (pretrained use).

    Examples
    --------
    >>> pairs = make_pairs(64, 64, seed=0)                    # doctest: +SKIP
    >>> enh = UnderwaterImageEnhancer(steps=500).fit(pairs.degraded, pairs.clean)
    ...                                                        # doctest: +SKIP
    >>> restored = enh.transform(pairs.degraded)               # doctest: +SKIP
    """

    def __init__(self, alpha=network.DEFAULT_ALPHA,
                 pyramid_sizes=network.DEFAULT_PYRAMID_SIZES,
                 channels=network.DEFAULT_CHANNELS,
                 steps=500, batch_size=8, crop_size=64,
                 lr_max=4e-4, lr_period=200, betas=(0.5, 0.999),
                 flip=True, rotate=True, seed=0,
                 weights_path=None, float64=False):
        self.alpha = alpha
        self.pyramid_sizes = pyramid_sizes
        self.channels = channels
        self.steps = steps
        self.batch_size = batch_size
        self.crop_size = crop_size
        self.lr_max = lr_max
        self.lr_period = lr_period
        self.betas = betas
        self.flip = flip
        self.rotate = rotate
        self.seed = seed
        self.weights_path = weights_path
        self.float64 = float64

    def _train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, batch_size=self.batch_size,
                           crop_size=self.crop_size, lr_max=self.lr_max,
                           lr_period=self.lr_period, betas=tuple(self.betas),
                           flip=self.flip, rotate=self.rotate, seed=self.seed,
                           float64=self.float64)

    def _initial_weights(self) -> network.NetworkWeights:
        if self.weights_path is not None:
            return weights_io.load_weights(self.weights_path).with_alpha(self.alpha)
        return network.default_network(seed=self.seed, channels=self.channels,
                                       alpha=self.alpha,
                                       pyramid_sizes=self.pyramid_sizes)

    def fit(self, X, y):
        """Train on degraded images ``X`` against clean references ``y``."""
        X = as_image_batch(X, "X")
        y = as_image_batch(y, "y")
        check_paired(X, y)
        pairs = PairSet(clean=y, degraded=X)
        self.weights_, self.loss_curve_ = train(
            self._train_config(), pairs, weights=self._initial_weights())
        return self

    def _working_weights(self) -> network.NetworkWeights:
        if hasattr(self, "weights_"):
            return self.weights_
        if self.weights_path is not None:
            return weights_io.load_weights(self.weights_path).with_alpha(self.alpha)
        raise NotFittedError("UnderwaterImageEnhancer is not fitted; call fit() "
                             "or set weights_path")

    def transform(self, X) -> np.ndarray:
        """Enhance a batch; returns (n, 3, h, w) float32 in [0, 1]."""
        X = as_image_batch(X, "X")
        return network.enhance(X, self._working_weights())

    def predict(self, X) -> np.ndarray:
        return self.transform(X)

    def score(self, X, y) -> float:
        """Mean PSNR (dB) of the enhanced batch against clean references."""
        y = as_image_batch(y, "y")
        enhanced = self.transform(X)
        check_paired(enhanced, y)
        report = metrics.evaluate_pairs(y, enhanced, no_reference=False)
        return report.mean("psnr")

    def save(self, path) -> None:
        """Write the fitted weights as a FANW1 file."""
        weights_io.save_weights(self._working_weights(), path)
