"""Shared grid types, FFT plumbing and sensor-window primitives.

FFT convention used everywhere: unnormalized forward transform, ``1/(rows*cols)``
on the inverse (numpy's default). Linear convolution of a ``P x Q`` scene with a
``K x L`` PSF is realized on the ``(P+K-1) x (Q+L-1)`` support grid, on which
circular and linear convolution coincide.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, NumericError

IMAG_TOLERANCE = 1e-9


def make_rng(seed, *keys):
    """Counter-based generator keyed by ``seed`` and an arbitrary key path.

    Strings in ``keys`` are hashed with CRC32 so the stream is stable across
    platforms and Python hash seeds.
    """
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """A real raster with its declared dynamic-range peak.

    ``data`` is always stored channel-planar as ``(channels, rows, cols)``.
    """

    data: np.ndarray
    peak: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[0] not in (1, 3):
            raise DimensionError(f"expected (rows, cols) or (channels, rows, cols), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NumericError("image contains NaN or Inf samples")
        object.__setattr__(self, "data", data)

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def rows(self):
        return self.data.shape[1]

    @property
    def cols(self):
        return self.data.shape[2]

    @property
    def image(self):
        """2D view for single-channel grids, the planar stack otherwise."""
        return self.data[0] if self.channels == 1 else self.data

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return self.peak == other.peak and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class SensorWindow:
    """Axis-aligned sampling region inside the full convolution support."""

    row_offset: int
    col_offset: int
    rows: int
    cols: int

    def __post_init__(self):
        if min(self.row_offset, self.col_offset) < 0 or min(self.rows, self.cols) < 1:
            raise DimensionError(f"invalid window {self}")

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def area(self):
        return self.rows * self.cols

    @property
    def slices(self):
        return (slice(self.row_offset, self.row_offset + self.rows),
                slice(self.col_offset, self.col_offset + self.cols))

    def fits(self, support_shape):
        return (self.row_offset + self.rows <= support_shape[0]
                and self.col_offset + self.cols <= support_shape[1])

    def check_fits(self, support_shape):
        if not self.fits(support_shape):
            raise DimensionError(f"window {self} exceeds support {tuple(support_shape)}")

    @classmethod
    def full(cls, support_shape):
        return cls(0, 0, int(support_shape[0]), int(support_shape[1]))

    @classmethod
    def centered(cls, support_shape, shape):
        rows, cols = int(shape[0]), int(shape[1])
        if rows > support_shape[0] or cols > support_shape[1]:
            raise DimensionError(f"window {shape} larger than support {tuple(support_shape)}")
        return cls((support_shape[0] - rows) // 2, (support_shape[1] - cols) // 2, rows, cols)


def support_shape(scene_shape, psf_shape):
    """Extent of the full linear convolution, ``(P+K-1, Q+L-1)``."""
    return (scene_shape[-2] + psf_shape[-2] - 1, scene_shape[-1] + psf_shape[-1] - 1)


def fft2(img, pad_rows=None, pad_cols=None):
    """Zero-padded 2D DFT over the last two axes.

    The image sits in the top-left corner of the padded grid.
    """
    img = np.asarray(img)
    pad_rows = img.shape[-2] if pad_rows is None else int(pad_rows)
    pad_cols = img.shape[-1] if pad_cols is None else int(pad_cols)
    if pad_rows < img.shape[-2] or pad_cols < img.shape[-1]:
        raise DimensionError(
            f"padding {(pad_rows, pad_cols)} smaller than image {img.shape[-2:]}")
    return np.fft.fft2(img, s=(pad_rows, pad_cols), axes=(-2, -1))


def ifft2(spec, check=True):
    """Inverse 2D DFT returning the real part.

    With ``check`` the input is assumed conjugate-symmetric and an imaginary
    residue above ``1e-9 * max|Re|`` raises :class:`NumericError`.
    """
    z = np.fft.ifft2(spec, axes=(-2, -1))
    if check:
        im = np.max(np.abs(z.imag), initial=0.0)
        re = np.max(np.abs(z.real), initial=0.0)
        if im > IMAG_TOLERANCE * re:
            raise NumericError(
                f"spectrum is not conjugate-symmetric: max|Im|={im:.3e}, max|Re|={re:.3e}")
    return np.ascontiguousarray(z.real)


def apply_window(img, window):
    """Crop to the sensor window; everything outside is discarded."""
    img = np.asarray(img)
    window.check_fits(img.shape[-2:])
    return img[(...,) + window.slices].copy()


def embed_window(meas, window, support_rows, support_cols):
    """Zero-filled support grid with ``meas`` placed at the window offset."""
    meas = np.asarray(meas)
    if meas.shape[-2:] != window.shape:
        raise DimensionError(f"measurement {meas.shape[-2:]} does not match window {window.shape}")
    window.check_fits((support_rows, support_cols))
    out = np.zeros(meas.shape[:-2] + (support_rows, support_cols), dtype=meas.dtype)
    out[(...,) + window.slices] = meas
    return out


def pad_to(img, shape):
    """Place ``img`` in the top-left corner of a zero grid of ``shape``."""
    img = np.asarray(img)
    if img.shape[-2] > shape[0] or img.shape[-1] > shape[1]:
        raise DimensionError(f"cannot pad {img.shape[-2:]} to {tuple(shape)}")
    out = np.zeros(img.shape[:-2] + tuple(shape), dtype=img.dtype)
    out[..., : img.shape[-2], : img.shape[-1]] = img
    return out
