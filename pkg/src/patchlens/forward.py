"""Measurement simulation: global LSI and locally convolutional models."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import SensorWindow, apply_window, fft2, ifft2, make_rng, support_shape
from .exceptions import ConfigError, DimensionError

# Sensor geometries of the public datasets, rows x cols.
MEASUREMENT_PRESETS = {
    "diffusercam": {"full": (270, 480), "min": (210, 400)},
    "phlatcam": {"full": (1280, 1480), "half": (600, 800), "min": (400, 400)},
}


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if not self.sigma >= 0:
            raise ConfigError(f"noise sigma must be >= 0, got {self.sigma}")

    def for_index(self, index):
        """Independent noise stream for sample ``index``, still seed-determined."""
        return replace(self, seed=int(make_rng(self.seed, "noise-index", index).integers(2**63)))

    def sample(self, shape):
        if self.kind == "none" or self.sigma == 0:
            return np.zeros(shape)
        return make_rng(self.seed, "noise").normal(0.0, self.sigma, size=shape)


NOISELESS = NoiseSpec()


def _finish(full, window, noise):
    if window is None:
        window = SensorWindow.full(full.shape[-2:])
    meas = apply_window(full, window)
    return meas + (noise or NOISELESS).sample(meas.shape)


def convolve_full(scene, psf):
    """Linear convolution on the full ``(P+K-1) x (Q+L-1)`` support."""
    shape = support_shape(np.shape(scene), np.shape(psf))
    return ifft2(fft2(scene, *shape) * fft2(psf, *shape))


def forward_global(scene, psf, window=None, noise=None):
    """``Y = W(H * X, window) + N`` with a single shift-invariant PSF."""
    scene = np.asarray(scene, dtype=np.float64)
    psf = np.asarray(psf, dtype=np.float64)
    if window is not None:
        window.check_fits(support_shape(scene.shape, psf.shape))
    return _finish(convolve_full(scene, psf), window, noise)


def forward_local(scene, field, layout, window=None, noise=None):
    """``Y = W(sum_b H_b * X_b, window) + N`` with ``X_b`` the nominal patch of the scene."""
    scene = np.asarray(scene, dtype=np.float64)
    field.check_layout(layout)
    if scene.shape[-2:] != layout.scene_shape:
        raise DimensionError(f"scene {scene.shape[-2:]} does not match layout {layout.scene_shape}")
    shape = support_shape(scene.shape, field.psf_shape)
    if window is not None:
        window.check_fits(shape)
    acc = np.zeros(scene.shape[:-2] + shape, dtype=np.complex128)
    for b, (r0, r1, c0, c1) in enumerate(layout.nominal_rects):
        part = np.zeros_like(scene)
        part[..., r0:r1, c0:c1] = scene[..., r0:r1, c0:c1]
        acc += fft2(field.local(b), *shape) * fft2(part, *shape)
    return _finish(ifft2(acc), window, noise)


def window_for_fraction(support, fraction):
    """Centered window keeping the support's aspect ratio at ``fraction`` of its area."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"area fraction must be in (0, 1], got {fraction}")
    scale = math.sqrt(fraction)
    rows = max(1, min(support[0], int(round(support[0] * scale))))
    cols = max(1, min(support[1], int(round(support[1] * scale))))
    return SensorWindow.centered(support, (rows, cols))


def windows_for_fractions(support, fractions):
    fractions = list(fractions)
    if any(not 0 < f <= 1 for f in fractions):
        raise ConfigError(f"area fractions must be in (0, 1], got {fractions}")
    if fractions != sorted(fractions, reverse=True):
        raise ConfigError(f"area fractions must be sorted descending, got {fractions}")
    return [window_for_fraction(support, f) for f in fractions]


def preset_windows(name, support=None):
    """Centered windows for a named dataset geometry, widest first."""
    try:
        sizes = list(MEASUREMENT_PRESETS[name].values())
    except KeyError:
        raise ConfigError(f"unknown measurement preset {name!r}") from None
    support = sizes[0] if support is None else support
    return [SensorWindow.centered(support, s) for s in sizes]


def truncation_series(scene, field, layout, fractions=None, noise=None, windows=None):
    """One measurement per progressively smaller centered sensor window.

    Pass either area ``fractions`` (descending, in ``(0, 1]``) or explicit
    ``windows``. Returns ``[(window, measurement), ...]``.
    """
    support = support_shape(np.shape(scene), field.psf_shape)
    if windows is None:
        if fractions is None:
            raise ConfigError("either fractions or windows is required")
        windows = windows_for_fractions(support, fractions)
    windows = list(windows)
    if any(b.area > a.area for a, b in zip(windows, windows[1:])):
        raise ConfigError("windows must have nonincreasing area")
    full = forward_local(scene, field, layout)
    return [(w, apply_window(full, w) + (noise or NOISELESS).sample(w.shape)) for w in windows]
