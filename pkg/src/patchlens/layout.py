"""Patch partition of a scene and its overlap-blend weights."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import ConfigError, DimensionError


def parse_grid(text):
    """Parse ``"5x6"`` into ``(rows, cols)`` patch counts."""
    try:
        rows, cols = (int(v) for v in str(text).lower().replace("×", "x").split("x"))
    except ValueError:
        raise ConfigError(f"expected a grid like '5x6', got {text!r}") from None
    return rows, cols


def _edges(n, k):
    # Even split; the remainder goes to the last patch.
    size = n // k
    return [i * size for i in range(k)] + [n]


def _axis_ranges(n, k, overlap):
    edges = _edges(n, k)
    lo_ext, hi_ext = overlap // 2, overlap - overlap // 2
    nominal, extended = [], []
    for i in range(k):
        a, b = edges[i], edges[i + 1]
        nominal.append((a, b))
        lo = 0 if i == 0 else max(a - lo_ext, 0)
        hi = n if i == k - 1 else min(b + hi_ext, n)
        extended.append((lo, hi))
    return edges, nominal, extended


def _axis_weights(n, k, overlap):
    """Per-patch 1D weights over ``n`` pixels, normalized to sum to one."""
    edges, _, extended = _axis_ranges(n, k, overlap)
    weights = np.zeros((k, n))
    for i, (lo, hi) in enumerate(extended):
        w = np.zeros(n)
        w[lo:hi] = 1.0
        if overlap > 0:
            pos = np.arange(n)
            if i > 0:
                start = edges[i] - overlap // 2
                t = pos - start
                zone = (t >= 0) & (t < overlap)
                w[zone] *= (t[zone] + 0.5) / overlap
            if i < k - 1:
                start = edges[i + 1] - overlap // 2
                t = pos - start
                zone = (t >= 0) & (t < overlap)
                w[zone] *= 1.0 - (t[zone] + 0.5) / overlap
        weights[i] = w
    return weights / weights.sum(axis=0)


@dataclass(frozen=True)
class PatchLayout:
    """``by x bx`` partition of a ``scene_rows x scene_cols`` scene.

    ``by`` counts patch rows and ``bx`` patch columns; patches are enumerated
    in row-major order. ``overlap`` is the width of the blend zone shared by
    two neighbouring patches, centered on their nominal boundary.
    """

    by: int
    bx: int
    overlap: int
    scene_rows: int
    scene_cols: int

    def __post_init__(self):
        if self.by < 1 or self.bx < 1:
            raise ConfigError(f"patch counts must be >= 1, got {self.by}x{self.bx}")
        if self.overlap < 0:
            raise ConfigError(f"overlap must be >= 0, got {self.overlap}")
        if self.scene_rows < self.by or self.scene_cols < self.bx:
            raise DimensionError(
                f"scene {self.scene_rows}x{self.scene_cols} too small for {self.by}x{self.bx} patches")

    @classmethod
    def from_grid(cls, grid, scene_shape, overlap=16):
        by, bx = parse_grid(grid) if isinstance(grid, str) else grid
        return cls(int(by), int(bx), int(overlap), int(scene_shape[-2]), int(scene_shape[-1]))

    @property
    def n_patches(self):
        return self.by * self.bx

    @property
    def scene_shape(self):
        return (self.scene_rows, self.scene_cols)

    @cached_property
    def _rows(self):
        return _axis_ranges(self.scene_rows, self.by, self.overlap)

    @cached_property
    def _cols(self):
        return _axis_ranges(self.scene_cols, self.bx, self.overlap)

    def _rects(self, which):
        rows, cols = self._rows[which], self._cols[which]
        return [(r0, r1, c0, c1) for (r0, r1) in rows for (c0, c1) in cols]

    @cached_property
    def nominal_rects(self):
        """``(r0, r1, c0, c1)`` half-open rectangles, row-major."""
        return self._rects(1)

    @cached_property
    def extended_rects(self):
        return self._rects(2)

    def patch_centers(self):
        return [((r0 + r1) / 2.0, (c0 + c1) / 2.0) for r0, r1, c0, c1 in self.nominal_rects]

    @cached_property
    def weights(self):
        """Blend weight rasters, one per patch, each on its extended rectangle."""
        wy = _axis_weights(self.scene_rows, self.by, self.overlap)
        wx = _axis_weights(self.scene_cols, self.bx, self.overlap)
        out = []
        total = np.zeros(self.scene_shape)
        for b, (r0, r1, c0, c1) in enumerate(self.extended_rects):
            i, j = divmod(b, self.bx)
            w = np.outer(wy[i, r0:r1], wx[j, c0:c1])
            out.append(w)
            total[r0:r1, c0:c1] += w
        for w, (r0, r1, c0, c1) in zip(out, self.extended_rects):
            w /= total[r0:r1, c0:c1]
            w.setflags(write=False)
        return out

    def weight_map(self, b):
        r0, r1, c0, c1 = self.extended_rects[b]
        out = np.zeros(self.scene_shape)
        out[r0:r1, c0:c1] = self.weights[b]
        return out

    def nominal_mask(self, b):
        r0, r1, c0, c1 = self.nominal_rects[b]
        out = np.zeros(self.scene_shape)
        out[r0:r1, c0:c1] = 1.0
        return out

    def extended_mask(self, b):
        r0, r1, c0, c1 = self.extended_rects[b]
        out = np.zeros(self.scene_shape)
        out[r0:r1, c0:c1] = 1.0
        return out

    def split(self, img):
        """Extended-rectangle crops of ``img`` (last two axes), row-major."""
        img = np.asarray(img)
        if img.shape[-2:] != self.scene_shape:
            raise DimensionError(f"image {img.shape[-2:]} does not match layout {self.scene_shape}")
        return [img[..., r0:r1, c0:c1] for r0, r1, c0, c1 in self.extended_rects]

    def blend(self, rasters):
        """Weighted reassembly of per-patch rasters on their extended rectangles."""
        rasters = list(rasters)
        if len(rasters) != self.n_patches:
            raise DimensionError(f"expected {self.n_patches} patches, got {len(rasters)}")
        lead = np.asarray(rasters[0]).shape[:-2]
        out = np.zeros(lead + self.scene_shape)
        for raster, w, (r0, r1, c0, c1) in zip(rasters, self.weights, self.extended_rects):
            raster = np.asarray(raster)
            if raster.shape[-2:] != (r1 - r0, c1 - c0):
                raise DimensionError(
                    f"patch raster {raster.shape[-2:]} does not match rectangle {(r1 - r0, c1 - c0)}")
            out[..., r0:r1, c0:c1] += w * raster
        return out
