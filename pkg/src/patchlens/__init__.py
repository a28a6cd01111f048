"""Patch-wise lensless deconvolution for spatially varying PSFs and truncated sensors."""

__version__ = "0.1.0"

from .core import ImageGrid, SensorWindow, fft2, ifft2, make_rng, support_shape
from .deconv import (KernelBank, apply_patch_deconv, fit_kernels_l1, fit_kernels_l2,
                     overlap_blend, wiener_bank, wiener_deconvolve)
from .enhance import Enhancer, ScaleSchedule, enhance_hierarchical, tv_denoise
from .estimators import (HierarchicalEnhancer, LocalConvolutionSimulator, PatchDeconvolver,
                         TVDenoiser)
from .exceptions import ConfigError, DataError, DimensionError, NumericError, PatchLensError
from .forward import NoiseSpec, forward_global, forward_local, truncation_series
from .layout import PatchLayout
from .metrics import EvalReport, evaluate, psnr, ssim
from .psf import PsfField, make_base_psf, synthesize_field

__all__ = [
    "ImageGrid", "SensorWindow", "fft2", "ifft2", "make_rng", "support_shape",
    "KernelBank", "apply_patch_deconv", "fit_kernels_l1", "fit_kernels_l2", "overlap_blend",
    "wiener_bank", "wiener_deconvolve",
    "Enhancer", "ScaleSchedule", "enhance_hierarchical", "tv_denoise",
    "HierarchicalEnhancer", "LocalConvolutionSimulator", "PatchDeconvolver", "TVDenoiser",
    "ConfigError", "DataError", "DimensionError", "NumericError", "PatchLensError",
    "NoiseSpec", "forward_global", "forward_local", "truncation_series",
    "PatchLayout",
    "EvalReport", "evaluate", "psnr", "ssim",
    "PsfField", "make_base_psf", "synthesize_field",
]
