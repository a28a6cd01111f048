"""Fine-to-coarse enhancement over patches, vertical blocks, horizontal blocks, full image.

Enhancers here are non-learned (TV denoising, unsharp masking); any callable
mapping a raster to a raster of the same shape can stand in for them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.restoration import denoise_tv_chambolle

from .exceptions import ConfigError
from .layout import PatchLayout

SCALE_KINDS = ("patches", "vertical", "horizontal", "full")
_RANK = {"patches": 0, "vertical": 1, "horizontal": 1, "full": 2}


def tv_denoise(img, weight, iters=50):
    """Isotropic TV denoising by Chambolle's dual projection; ``weight=0`` is the identity."""
    if not weight >= 0:
        raise ConfigError(f"TV weight must be >= 0, got {weight}")
    if iters < 1:
        raise ConfigError(f"TV iterations must be >= 1, got {iters}")
    img = np.asarray(img, dtype=np.float64)
    if weight == 0:
        return img.copy()
    if img.ndim == 3:
        return np.stack([tv_denoise(c, weight, iters) for c in img])
    return denoise_tv_chambolle(img, weight=weight, max_num_iter=int(iters), eps=1e-8)


def unsharp(img, sigma=1.0, amount=0.5):
    img = np.asarray(img, dtype=np.float64)
    sigmas = (0,) * (img.ndim - 2) + (sigma, sigma)
    return img + amount * (img - ndimage.gaussian_filter(img, sigmas, mode="nearest"))


def total_variation(img):
    """Isotropic TV with forward differences (zero beyond the last row/column)."""
    img = np.asarray(img, dtype=np.float64)
    dy = np.zeros_like(img)
    dx = np.zeros_like(img)
    dy[..., :-1, :] = img[..., 1:, :] - img[..., :-1, :]
    dx[..., :, :-1] = img[..., :, 1:] - img[..., :, :-1]
    return float(np.sum(np.sqrt(dy ** 2 + dx ** 2)))


@dataclass(frozen=True)
class Enhancer:
    kind: str = "identity"
    weight: float = 0.0
    iters: int = 50
    sigma: float = 1.0
    amount: float = 0.5

    def __post_init__(self):
        if self.kind not in ("identity", "tv-denoise", "unsharp"):
            raise ConfigError(f"unknown enhancer {self.kind!r}")
        if not all(np.isfinite([self.weight, self.sigma, self.amount])):
            raise ConfigError("enhancer parameters must be finite")
        if self.weight < 0 or self.iters < 1 or self.sigma < 0:
            raise ConfigError(f"invalid enhancer parameters {self}")

    @classmethod
    def parse(cls, text):
        """``identity``, ``tv-denoise:<weight>[:<iters>]`` or ``unsharp:<sigma>[:<amount>]``."""
        kind, *args = [t.strip() for t in str(text).split(":")]
        try:
            if kind == "identity" and not args:
                return cls()
            if kind == "tv-denoise" and 1 <= len(args) <= 2:
                return cls(kind, weight=float(args[0]), iters=int(args[1]) if len(args) > 1 else 50)
            if kind == "unsharp" and 1 <= len(args) <= 2:
                return cls(kind, sigma=float(args[0]), amount=float(args[1]) if len(args) > 1 else 0.5)
        except ValueError:
            pass
        raise ConfigError(f"cannot parse enhancer {text!r}")

    def __str__(self):
        if self.kind == "tv-denoise":
            return f"tv-denoise:{self.weight!r}:{self.iters}"
        if self.kind == "unsharp":
            return f"unsharp:{self.sigma!r}:{self.amount!r}"
        return "identity"

    @property
    def is_identity(self):
        return self.kind == "identity"

    def __call__(self, img):
        if self.kind == "tv-denoise":
            return tv_denoise(img, self.weight, self.iters)
        if self.kind == "unsharp":
            return unsharp(img, self.sigma, self.amount)
        return np.asarray(img, dtype=np.float64).copy()


@dataclass(frozen=True)
class Scale:
    kind: str
    by: int = 1
    bx: int = 1
    overlap: int = 16

    def __post_init__(self):
        if self.kind not in SCALE_KINDS:
            raise ConfigError(f"unknown scale {self.kind!r}")

    def layout(self, shape):
        counts = {"patches": (self.by, self.bx), "vertical": (self.by, 1),
                  "horizontal": (1, self.bx), "full": (1, 1)}[self.kind]
        return PatchLayout(counts[0], counts[1], self.overlap, shape[-2], shape[-1])


class ScaleSchedule(tuple):
    """Ordered fine-to-coarse scales ending with the full image."""

    def __new__(cls, scales):
        scales = tuple(scales)
        if not scales or scales[-1].kind != "full":
            raise ConfigError("a scale schedule must end with the full image")
        ranks = [_RANK[s.kind] for s in scales]
        if ranks != sorted(ranks):
            raise ConfigError(f"scales must be ordered fine to coarse: {[s.kind for s in scales]}")
        return super().__new__(cls, scales)

    @classmethod
    def from_kinds(cls, kinds, by, bx, overlap=16):
        return cls(Scale(k, by, bx, overlap) for k in kinds)

    @classmethod
    def default(cls, by, bx, overlap=16):
        return cls.from_kinds(SCALE_KINDS, by, bx, overlap)


def enhance_hierarchical(img, schedule, per_scale, fuse_weight=0.5):
    """Enhance region-wise at every scale, fusing each level with the previous one.

    At each scale the current image is cut into overlapping regions, each
    region is enhanced, the results are blended back with partition-of-unity
    weights and mixed as ``fuse_weight * current + (1 - fuse_weight) * previous``.
    Identity enhancers leave the running result untouched.
    """
    per_scale = list(per_scale)
    if len(per_scale) != len(schedule):
        raise ConfigError(f"{len(schedule)} scales but {len(per_scale)} enhancers")
    if not 0 <= fuse_weight <= 1:
        raise ConfigError(f"fuse_weight must be in [0, 1], got {fuse_weight}")
    result = np.asarray(img, dtype=np.float64)
    for scale, enhancer in zip(schedule, per_scale):
        if getattr(enhancer, "is_identity", False):
            continue
        layout = scale.layout(result.shape)
        current = layout.blend(enhancer(region) for region in layout.split(result))
        result = fuse_weight * current + (1.0 - fuse_weight) * result
    return result
