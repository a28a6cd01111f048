"""Synthetic scenes and paired measurement/ground-truth directories."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import make_rng
from .exceptions import ConfigError, DataError
from .io import read_image

SCENE_KINDS = ("stripes", "checker", "glyphs", "natural-mix")
_EXTENSIONS = (".png", ".plg", ".plg1")

# Stroke segments of a 3x5 glyph cell, as (r0, c0, r1, c1) in cell units.
_SEGMENTS = [(0, 0, 0, 2), (2, 0, 2, 2), (4, 0, 4, 2), (0, 0, 2, 0), (2, 0, 4, 0),
             (0, 2, 2, 2), (2, 2, 4, 2), (0, 0, 4, 2), (0, 1, 4, 1)]


def _stripes(rng, rows, cols, period=None, orientation="vertical"):
    period = rng.uniform(4, 16) if period is None else float(period)
    if orientation == "random":
        orientation = "vertical" if rng.random() < 0.5 else "horizontal"
    n = cols if orientation == "vertical" else rows
    phase = rng.uniform(0, period)
    wave = ((np.arange(n) + phase) % period) < period / 2
    lo, hi = sorted(rng.uniform(0.0, 1.0, 2))
    line = np.where(wave, hi, lo)
    return np.tile(line, (rows, 1)) if orientation == "vertical" else np.tile(line[:, None], (1, cols))


def _checker(rng, rows, cols, cell=None):
    cell = int(rng.integers(4, 17)) if cell is None else int(cell)
    yy, xx = np.mgrid[:rows, :cols]
    lo, hi = sorted(rng.uniform(0.0, 1.0, 2))
    return np.where(((yy // cell) + (xx // cell)) % 2 == 0, hi, lo)


def _glyphs(rng, rows, cols, size=None):
    size = int(rng.integers(2, 4)) if size is None else int(size)
    img = np.full((rows, cols), rng.uniform(0.7, 1.0))
    ink = rng.uniform(0.0, 0.3)
    cell_h, cell_w = 6 * size, 4 * size
    for top in range(size, rows - cell_h + 1, cell_h + size):
        for left in range(size, cols - cell_w + 1, cell_w):
            if rng.random() < 0.15:
                continue
            for k in rng.choice(len(_SEGMENTS), size=int(rng.integers(2, 5)), replace=False):
                r0, c0, r1, c1 = _SEGMENTS[k]
                steps = 4 * size
                for t in np.linspace(0.0, 1.0, steps):
                    r = top + int(round((r0 + t * (r1 - r0)) * size))
                    c = left + int(round((c0 + t * (c1 - c0)) * size))
                    img[r:r + max(1, size // 2 + 1), c:c + max(1, size // 2 + 1)] = ink
    return img


def _natural(rng, rows, cols):
    img = np.zeros((rows, cols))
    yy, xx = np.mgrid[:rows, :cols]
    for _ in range(12):
        cy, cx = rng.uniform(0, rows), rng.uniform(0, cols)
        s = rng.uniform(3, 15)
        img += rng.random() * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    img += 0.3 * ndimage.gaussian_filter(rng.random((rows, cols)), 1.0)
    for _ in range(4):
        r0 = int(rng.integers(0, max(1, rows - 20)))
        c0 = int(rng.integers(0, max(1, cols - 20)))
        img[r0:r0 + int(rng.integers(5, 30)), c0:c0 + int(rng.integers(5, 40))] += 0.5 * rng.random()
    img -= img.min()
    top = img.max()
    return img / top if top > 0 else img


def generate_scenes(kind, count, rows, cols, seed=0, **params):
    """Deterministic synthetic scenes with values in ``[0, 1]``.

    ``stripes`` accepts ``period`` and ``orientation`` (``vertical``,
    ``horizontal`` or ``random``), ``checker`` accepts ``cell``, ``glyphs``
    accepts ``size``.
    """
    makers = {"stripes": _stripes, "checker": _checker, "glyphs": _glyphs, "natural-mix": _natural}
    if kind not in makers:
        raise ConfigError(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")
    if count < 1:
        raise ConfigError(f"scene count must be >= 1, got {count}")
    out = []
    for i in range(count):
        rng = make_rng(seed, "scene", kind, i)
        out.append(np.clip(makers[kind](rng, rows, cols, **params), 0.0, 1.0))
    return out


def _role_files(directory, prefix):
    found = {}
    for name in os.listdir(directory):
        stem, ext = os.path.splitext(name)
        if name.startswith(prefix) and ext.lower() in _EXTENSIONS:
            found[stem[len(prefix):]] = Path(directory) / name
    return found


def load_pairs(directory):
    """Aligned ``meas_<key>`` / ``gt_<key>`` rasters, sorted by key bytes.

    Measurements and ground truth may differ in size; each role must be
    internally consistent.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    meas = _role_files(directory, "meas_")
    truth = _role_files(directory, "gt_")
    if not meas and not truth:
        raise DataError(f"{directory}: no meas_*/gt_* files")
    unmatched = sorted(set(meas) ^ set(truth))
    if unmatched:
        offenders = [str(meas.get(k) or truth.get(k)) for k in unmatched]
        raise DataError(f"unmatched files: {', '.join(offenders)}")
    keys = sorted(meas, key=lambda k: k.encode())
    pairs = [(read_image(meas[k]), read_image(truth[k])) for k in keys]
    for role, idx in (("measurement", 0), ("ground truth", 1)):
        shapes = {p[idx].data.shape for p in pairs}
        if len(shapes) > 1:
            raise DataError(f"inconsistent {role} dimensions: {sorted(shapes)}")
    return pairs
