"""Spatially varying PSF sets: synthetic bases, parametric variation, loading."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import make_rng
from .exceptions import ConfigError, DataError, DimensionError, NumericError
from .io import read_image, write_plg

BASE_KINDS = ("gaussian-speckle", "contour-rim", "delta")
VARIATION_MODES = ("shift", "rotate-warp", "blur-gradient")

# Reject bases whose spectrum dips below this fraction of its maximum.
SPECTRAL_FLOOR = 1e-6
SPECKLE_DENSITY = 0.07
SPECKLE_SIGMA = 0.8
_MAX_ATTEMPTS = 64


def _normalize(psf):
    psf = np.clip(psf, 0.0, None)
    total = psf.sum()
    if not total > 0:
        raise NumericError("PSF has no positive mass")
    return psf / total


def spectral_floor(psf):
    """Ratio of the smallest to the largest spectral magnitude."""
    mag = np.abs(np.fft.fft2(psf))
    return mag.min() / mag.max()


def _speckle(rng, rows, cols):
    n_points = max(1, int(round(SPECKLE_DENSITY * rows * cols)))
    field_ = np.zeros((rows, cols))
    r = rng.integers(0, rows, n_points)
    c = rng.integers(0, cols, n_points)
    np.add.at(field_, (r, c), rng.uniform(0.2, 1.0, n_points))
    return ndimage.gaussian_filter(field_, SPECKLE_SIGMA, mode="constant")


def _contour(rng, rows, cols):
    r0 = 0.35 * min(rows, cols)
    theta = np.linspace(0.0, 2.0 * np.pi, 8 * (rows + cols), endpoint=False)
    radius = np.ones_like(theta)
    for k in range(2, 6):
        radius += rng.uniform(-0.08, 0.08) * np.cos(k * theta + rng.uniform(0, 2 * np.pi))
    y = (rows - 1) / 2.0 + r0 * radius * np.sin(theta)
    x = (cols - 1) / 2.0 + r0 * radius * np.cos(theta)
    out = np.zeros((rows, cols))
    # Bilinear splatting of the contour samples.
    y0, x0 = np.floor(y).astype(int), np.floor(x).astype(int)
    fy, fx = y - y0, x - x0
    for dy, dx, w in ((0, 0, (1 - fy) * (1 - fx)), (1, 0, fy * (1 - fx)),
                      (0, 1, (1 - fy) * fx), (1, 1, fy * fx)):
        yy, xx = y0 + dy, x0 + dx
        ok = (yy >= 0) & (yy < rows) & (xx >= 0) & (xx < cols)
        np.add.at(out, (yy[ok], xx[ok]), w[ok])
    out = ndimage.gaussian_filter(out, 0.6, mode="constant")
    # Faint diffuse background keeps the spectrum away from exact zeros.
    return out + 1e-3 * out.max() * ndimage.gaussian_filter(rng.random((rows, cols)), 1.0)


def make_base_psf(kind, rows, cols, seed=0):
    """Nonnegative unit-sum reference PSF.

    ``gaussian-speckle`` is a sparse random point field blurred by a narrow
    Gaussian (diffuser caustics), ``contour-rim`` a thin random closed contour
    (phase-mask analog), ``delta`` a unit impulse at the center pixel. Random
    kinds are redrawn until their spectrum has no near-zeros.
    """
    if kind not in BASE_KINDS:
        raise ConfigError(f"unknown PSF kind {kind!r}; choose from {BASE_KINDS}")
    rows, cols = int(rows), int(cols)
    if rows < 1 or cols < 1:
        raise ConfigError(f"PSF size must be positive, got {rows}x{cols}")
    if kind == "delta":
        psf = np.zeros((rows, cols))
        psf[rows // 2, cols // 2] = 1.0
        return psf
    draw = _speckle if kind == "gaussian-speckle" else _contour
    for attempt in range(_MAX_ATTEMPTS):
        rng = make_rng(seed, "psf", kind, attempt)
        psf = _normalize(draw(rng, rows, cols))
        if spectral_floor(psf) > SPECTRAL_FLOOR:
            return psf
    raise NumericError(f"could not draw a well-conditioned {kind} PSF in {_MAX_ATTEMPTS} attempts")


@dataclass(eq=False)
class PsfField:
    """Base PSF plus one local PSF per patch, ``locals_`` shaped ``(by, bx, K, L)``."""

    base: np.ndarray
    locals_: np.ndarray
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=np.float64)
        self.locals_ = np.asarray(self.locals_, dtype=np.float64)
        if self.locals_.ndim != 4 or self.locals_.shape[2:] != self.base.shape:
            raise DimensionError(
                f"locals {self.locals_.shape} do not match base PSF {self.base.shape}")

    @property
    def grid(self):
        return self.locals_.shape[:2]

    @property
    def psf_shape(self):
        return self.base.shape

    def local(self, b):
        """Local PSF of patch ``b`` in row-major order."""
        i, j = divmod(b, self.grid[1])
        return self.locals_[i, j]

    def check_layout(self, layout):
        if tuple(self.grid) != (layout.by, layout.bx):
            raise ConfigError(f"field grid {self.grid} does not match layout {layout.by}x{layout.bx}")

    @classmethod
    def uniform(cls, base, layout):
        base = np.asarray(base, dtype=np.float64)
        locals_ = np.broadcast_to(base, (layout.by, layout.bx) + base.shape).copy()
        return cls(base, locals_, {"mode": "uniform", "strength": 0.0, "seed": 0})


def _eccentricities(layout):
    """Patch-center offsets from the scene center, farthest patch at unit length."""
    centers = np.array(layout.patch_centers())
    offsets = centers - np.array([layout.scene_rows / 2.0, layout.scene_cols / 2.0])
    norm = np.hypot(offsets[:, 0], offsets[:, 1]).max()
    return offsets / norm if norm > 0 else np.zeros_like(offsets)


def shift_psf(psf, dy, dx):
    """Sub-pixel translation through a frequency-domain phase ramp."""
    if dy == 0 and dx == 0:
        return psf.copy()
    pad = int(math.ceil(max(abs(dy), abs(dx)))) + 2
    padded = np.pad(psf, pad)
    fy = np.fft.fftfreq(padded.shape[0])[:, None]
    fx = np.fft.fftfreq(padded.shape[1])[None, :]
    ramp = np.exp(-2j * np.pi * (fy * dy + fx * dx))
    moved = np.fft.ifft2(np.fft.fft2(padded) * ramp).real
    return _normalize(moved[pad:-pad, pad:-pad])


def _vary(base, mode, amount, direction):
    if amount == 0:
        return base.copy()
    if mode == "shift":
        return shift_psf(base, amount * direction[0], amount * direction[1])
    if mode == "rotate-warp":
        angle = amount * (1.0 if direction[1] >= 0 else -1.0)
        return _normalize(ndimage.rotate(base, angle, reshape=False, order=3, mode="constant"))
    return _normalize(ndimage.gaussian_filter(base, amount, mode="constant"))


def synthesize_field(base, layout, mode="shift", strength=0.0, seed=0):
    """Derive one local PSF per patch from ``base``.

    The variation grows linearly with the patch's distance from the scene
    center and reaches ``strength`` at the farthest patch: pixels of radial
    displacement (``shift``), degrees of rotation (``rotate-warp``), or the
    Gaussian sigma of extra blur (``blur-gradient``).
    """
    if mode not in VARIATION_MODES:
        raise ConfigError(f"unknown variation mode {mode!r}; choose from {VARIATION_MODES}")
    if not strength >= 0:
        raise ConfigError(f"strength must be >= 0, got {strength}")
    base = np.asarray(base, dtype=np.float64)
    if base.min() < 0 or abs(base.sum() - 1.0) > 1e-12:
        base = _normalize(base)
    ecc = _eccentricities(layout)
    locals_ = np.empty((layout.by, layout.bx) + base.shape)
    for b, e in enumerate(ecc):
        i, j = divmod(b, layout.bx)
        radius = float(np.hypot(*e))
        if strength == 0 or radius == 0:
            locals_[i, j] = base
            continue
        direction = e / radius if mode == "shift" else e
        amount = strength * radius
        locals_[i, j] = _vary(base, mode, amount, direction)
    return PsfField(base, locals_, {"mode": mode, "strength": float(strength), "seed": int(seed)})


def _load_psf(path):
    img = read_image(path).data.mean(axis=0)
    if np.any(img < 0):
        warnings.warn(f"{path}: negative PSF samples clipped to zero", stacklevel=3)
        img = np.clip(img, 0, None)
    total = img.sum()
    if not total > 0:
        raise DataError(f"{path}: PSF has zero total mass")
    if abs(total - 1.0) > 0.01:
        warnings.warn(f"{path}: PSF renormalized (mass was {total:.4g})", stacklevel=3)
    return img / total


def load_field(paths, layout):
    """Load one shared PSF (single path) or ``by*bx`` per-patch PSFs (row-major)."""
    if isinstance(paths, (str, Path)):
        base = _load_psf(paths)
        field_ = PsfField.uniform(base, layout)
        field_.descriptor = {"mode": "file", "strength": 0.0, "seed": 0}
        return field_
    paths = list(paths)
    if len(paths) != layout.n_patches:
        raise DataError(f"expected {layout.n_patches} PSF files, got {len(paths)}")
    psfs = [_load_psf(p) for p in paths]
    shapes = {p.shape for p in psfs}
    if len(shapes) != 1:
        raise DataError(f"PSF files disagree in shape: {sorted(shapes)}")
    locals_ = np.stack(psfs).reshape((layout.by, layout.bx) + psfs[0].shape)
    base = locals_.mean(axis=(0, 1))
    return PsfField(base / base.sum(), locals_, {"mode": "file", "strength": 0.0, "seed": 0})


def write_manifest(path, field_, psf_dir):
    """Write every PSF as PLG1 and a ``key = value`` manifest listing them."""
    psf_dir = Path(psf_dir)
    psf_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"mode = {field_.descriptor.get('mode', 'file')}",
             f"strength = {field_.descriptor.get('strength', 0.0)!r}",
             f"seed = {field_.descriptor.get('seed', 0)}",
             f"grid = {field_.grid[0]}x{field_.grid[1]}"]
    write_plg(psf_dir / "base.plg", field_.base)
    lines.append("base = base.plg")
    written = [psf_dir / "base.plg"]
    for i in range(field_.grid[0]):
        for j in range(field_.grid[1]):
            name = f"local_{i:02d}_{j:02d}.plg"
            write_plg(psf_dir / name, field_.locals_[i, j])
            written.append(psf_dir / name)
            lines.append(f"patch.{i}.{j} = {name}")
    Path(path).write_text("\n".join(lines) + "\n")
    return written


def read_manifest(path, layout):
    path = Path(path)
    entries = {}
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            key, _, value = line.partition("=")
            entries[key.strip()] = value.strip()
    patch_paths = [path.parent / entries[f"patch.{i}.{j}"]
                   for i in range(layout.by) for j in range(layout.bx)
                   if f"patch.{i}.{j}" in entries]
    if patch_paths:
        field_ = load_field(patch_paths, layout)
        if "base" in entries:
            field_ = PsfField(_load_psf(path.parent / entries["base"]), field_.locals_,
                              field_.descriptor)
    else:
        field_ = load_field(path.parent / entries["base"], layout)
    field_.descriptor = {"mode": entries.get("mode", "file"),
                         "strength": float(entries.get("strength", 0.0)),
                         "seed": int(entries.get("seed", 0))}
    return field_
