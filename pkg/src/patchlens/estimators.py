"""Estimator-style wrappers: fit kernels on (measurement, scene) pairs, transform measurements."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import support_shape
from .deconv import (WIENER_LAMBDA, apply_patch_deconv, embed_stack, fit_kernels_l1,
                     fit_kernels_l2, wiener_bank)
from .enhance import SCALE_KINDS, Enhancer, ScaleSchedule, enhance_hierarchical, tv_denoise
from .exceptions import ConfigError, DimensionError
from .forward import NoiseSpec, forward_local
from .layout import PatchLayout
from .metrics import evaluate
from .psf import PsfField
from .validation import check_choice, check_grid, check_pairs, check_scalar, check_stack


class PatchDeconvolver(RegressorMixin, TransformerMixin, BaseEstimator):
    """Patch-wise frequency-domain deconvolution with overlap-blend stitching.

    Parameters
    ----------
    grid : str or (int, int)
        Patch counts as ``"5x6"`` or ``(rows, cols)``; ``(1, 1)`` is the
        global single-kernel baseline.
    overlap : int
        Width of the blend zone straddling each interior patch boundary.
    method : {"l2", "l1", "wiener"}
        ``l2`` is the regularized closed-form fit, ``l1`` refines it by
        gradient descent on the stitched smoothed-L1 loss, ``wiener`` builds
        kernels from ``psf`` and ignores the training pairs.
    lam, lam_mode
        Regularization for the ``l2`` fit (``relative`` scales by the mean
        measurement energy per bin).
    wiener_lam : float
        Regularization for ``wiener``, relative to the PSF's mean power.
    correction_radius : int or None
        Half-width of each patch's spatial correction kernel in the ``l2``
        fit; ``None`` keeps the shared diagonal solution only.
    psf : ndarray or PsfField, optional
        Required for ``wiener``; a field gives one kernel per patch.
    window : SensorWindow, optional
        Where the measurements sit on the deconvolution grid. ``None`` means
        they already cover it.
    grid_shape : (int, int), optional
        Deconvolution grid; defaults to the measurement shape without a
        window, otherwise to the linear-convolution support of ``psf``.
    epochs, lr, milestones, gamma, huber_delta, loss, tie_alpha
        Settings of the ``l1`` refinement.
    clip : bool
        Clip reconstructions to ``[0, peak]``.

    Attributes
    ----------
    bank_ : KernelBank
    layout_ : PatchLayout
    """

    def __init__(self, grid=(4, 5), overlap=16, method="l2", lam=1e-4, lam_mode="relative",
                 wiener_lam=WIENER_LAMBDA, correction_radius=4, psf=None, window=None,
                 grid_shape=None, epochs=200, lr=0.1, milestones=(50, 100, 150), gamma=0.1,
                 huber_delta=1e-3, loss="huber", tie_alpha=False, clip=True, peak=1.0):
        self.grid = grid
        self.overlap = overlap
        self.method = method
        self.lam = lam
        self.lam_mode = lam_mode
        self.wiener_lam = wiener_lam
        self.correction_radius = correction_radius
        self.psf = psf
        self.window = window
        self.grid_shape = grid_shape
        self.epochs = epochs
        self.lr = lr
        self.milestones = milestones
        self.gamma = gamma
        self.huber_delta = huber_delta
        self.loss = loss
        self.tie_alpha = tie_alpha
        self.clip = clip
        self.peak = peak

    def _deconv_grid(self, meas_shape, scene_shape):
        if self.grid_shape is not None:
            return tuple(int(v) for v in self.grid_shape)
        if self.window is None:
            return tuple(meas_shape)
        if self.psf is None:
            raise ConfigError("grid_shape or psf is needed to place a windowed measurement")
        psf_shape = self.psf.psf_shape if isinstance(self.psf, PsfField) else np.shape(self.psf)
        return support_shape(scene_shape, psf_shape)

    def fit(self, X, y):
        """Fit one kernel and coefficient per patch.

        Parameters
        ----------
        X : array-like, (n, rows, cols) or (n, channels, rows, cols)
            Measurements (windowed if ``window`` is set).
        y : array-like, (n, P, Q) or (n, channels, P, Q)
            Ground-truth scenes.
        """
        check_choice(self.method, "method", ("l2", "l1", "wiener"))
        check_scalar(self.overlap, "overlap", int, low=0)
        X, y = check_pairs(X, y)
        layout = PatchLayout.from_grid(check_grid(self.grid), y.shape[-2:], self.overlap)
        grid = self._deconv_grid(X.shape[-2:], y.shape[-2:])
        if self.window is not None:
            self.window.check_fits(grid)
        if self.method == "wiener":
            if self.psf is None:
                raise ConfigError("method 'wiener' needs a psf")
            channels = X.shape[1] if X.ndim == 4 else 1
            bank = wiener_bank(self.psf, layout, grid, self.wiener_lam, "relative", channels)
        else:
            meas = embed_stack(X, self.window, grid)
            bank = fit_kernels_l2(meas, y, layout, self.lam, self.lam_mode,
                                  correction_radius=self.correction_radius)
            if self.method == "l1":
                bank = fit_kernels_l1(meas, y, bank, lr=self.lr, epochs=self.epochs,
                                      huber_delta=self.huber_delta,
                                      milestones=tuple(self.milestones), gamma=self.gamma,
                                      loss=self.loss, tie_alpha=self.tie_alpha)
        self.bank_ = bank
        self.layout_ = layout
        self.n_channels_ = X.shape[1] if X.ndim == 4 else 0
        return self

    def transform(self, X):
        """Stitched reconstructions, one per measurement."""
        check_is_fitted(self, "bank_")
        X = check_stack(X)
        if (X.shape[1] if X.ndim == 4 else 0) != self.n_channels_:
            raise DimensionError(f"measurement stack {X.shape} does not match the fitted channel layout")
        out = np.stack([apply_patch_deconv(x, self.window, self.bank_) for x in X])
        return np.clip(out, 0.0, self.peak) if self.clip else out

    def predict(self, X):
        return self.transform(X)

    def score(self, X, y):
        """Mean PSNR in dB against ``y``."""
        return evaluate(self.transform(X), check_stack(y, "y"), peak=self.peak).mean_psnr

    @property
    def parameter_count_(self):
        check_is_fitted(self, "bank_")
        return self.bank_.parameter_count


class LocalConvolutionSimulator(TransformerMixin, BaseEstimator):
    """Patch-wise forward model: scenes in, (windowed, noisy) measurements out.

    ``field`` fixes the patch grid; the layout has no overlap since each
    scene pixel belongs to exactly one nominal patch.
    """

    def __init__(self, field=None, window=None, noise_sigma=0.0, seed=0):
        self.field = field
        self.window = window
        self.noise_sigma = noise_sigma
        self.seed = seed

    def fit(self, X=None, y=None):
        if not isinstance(self.field, PsfField):
            raise ConfigError("field must be a PsfField")
        check_scalar(self.noise_sigma, "noise_sigma", low=0)
        return self

    def transform(self, X):
        self.fit()
        X = check_stack(X)
        by, bx = self.field.grid
        layout = PatchLayout(by, bx, 0, X.shape[-2], X.shape[-1])
        noise = NoiseSpec("gaussian" if self.noise_sigma > 0 else "none", float(self.noise_sigma),
                          int(self.seed))
        return np.stack([forward_local(x, self.field, layout, self.window, noise.for_index(i))
                         for i, x in enumerate(X)])


class TVDenoiser(TransformerMixin, BaseEstimator):
    def __init__(self, weight=0.1, iters=50):
        self.weight = weight
        self.iters = iters

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        X = check_stack(X)
        return np.stack([tv_denoise(x, self.weight, self.iters) for x in X])


class HierarchicalEnhancer(TransformerMixin, BaseEstimator):
    """Fine-to-coarse enhancement over patches, vertical and horizontal blocks, full image.

    ``enhancers`` holds one spec per scale: ``"identity"``,
    ``"tv-denoise:<weight>[:<iters>]"`` or ``"unsharp:<sigma>[:<amount>]"``.
    """

    def __init__(self, grid=(4, 5), overlap=16, scales=SCALE_KINDS,
                 enhancers=("identity",) * 4, fuse_weight=0.5):
        self.grid = grid
        self.overlap = overlap
        self.scales = scales
        self.enhancers = enhancers
        self.fuse_weight = fuse_weight

    def fit(self, X=None, y=None):
        by, bx = check_grid(self.grid)
        self.schedule_ = ScaleSchedule.from_kinds(self.scales, by, bx, self.overlap)
        self.enhancers_ = [e if isinstance(e, Enhancer) else Enhancer.parse(e)
                           for e in self.enhancers]
        if len(self.enhancers_) != len(self.schedule_):
            raise ConfigError(f"{len(self.schedule_)} scales but {len(self.enhancers_)} enhancers")
        return self

    def transform(self, X):
        if not hasattr(self, "schedule_"):
            self.fit()
        X = check_stack(X)
        return np.stack([enhance_hierarchical(x, self.schedule_, self.enhancers_, self.fuse_weight)
                         for x in X])


__all__ = ["PatchDeconvolver", "LocalConvolutionSimulator", "TVDenoiser", "HierarchicalEnhancer"]
