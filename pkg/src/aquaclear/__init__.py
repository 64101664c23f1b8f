"""aquaclear: ultra-lightweight real-time underwater image enhancement.

A self-contained engine around a ~9K-parameter two-stage network: numpy
tensor kernels (convolution, bilinear resize, arbitrary-size real FFT),
tape-based reverse-mode autodiff, a desk-scale trainer, underwater image
quality metrics, a synthetic degradation generator, and a CLI.
"""

from .degradation import DegradeParams, PairSet, degrade, make_pairs
from .estimator import UnderwaterImageEnhancer
from .metrics import QualityReport, evaluate_pairs, mse, psnr, ssim, uciqe, uiqm
from .network import (NetworkWeights, PyramidConfig, count_gflops, count_params,
                      default_network, enhance, gflops_breakdown)
from .tensor_ops import ConvKernel, SpectralPair
from .training import TrainConfig, adam_step, augment, cyclic_lr, train
from .weights_io import load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "ConvKernel",
    "DegradeParams",
    "NetworkWeights",
    "PairSet",
    "PyramidConfig",
    "QualityReport",
    "SpectralPair",
    "TrainConfig",
    "UnderwaterImageEnhancer",
    "adam_step",
    "augment",
    "count_gflops",
    "count_params",
    "cyclic_lr",
    "default_network",
    "degrade",
    "enhance",
    "evaluate_pairs",
    "gflops_breakdown",
    "load_weights",
    "make_pairs",
    "mse",
    "psnr",
    "save_weights",
    "ssim",
    "train",
    "uciqe",
    "uiqm",
    "__version__",
]
