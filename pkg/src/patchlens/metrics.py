"""PSNR / SSIM and experiment-level reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .exceptions import ConfigError, DimensionError

PSNR_CAP = 99.0
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak=1.0):
    """``10 log10(peak^2 / MSE)``, capped at 99 dB (identical inputs return the cap)."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak ** 2 / mse))


def gaussian_window(radius=SSIM_RADIUS, sigma=SSIM_SIGMA):
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(k ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _ssim_plane(a, b, peak):
    r = SSIM_RADIUS
    if min(a.shape) < 2 * r + 1:
        raise DimensionError(f"SSIM needs at least {2 * r + 1} pixels per side, got {a.shape}")
    g = gaussian_window()

    def blur(x):
        x = ndimage.correlate1d(x, g, axis=0, mode="constant")
        x = ndimage.correlate1d(x, g, axis=1, mode="constant")
        return x[r:-r, r:-r]

    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a, b, peak=1.0):
    """Mean SSIM, 11x11 Gaussian window (sigma 1.5), valid region only.

    Channel-planar ``(3, rows, cols)`` inputs return the mean per-channel SSIM.
    """
    a, b = _pair(a, b)
    if np.array_equal(a, b):
        return 1.0
    if a.ndim == 2:
        return _ssim_plane(a, b, peak)
    return float(np.mean([_ssim_plane(x, y, peak) for x, y in zip(a, b)]))


@dataclass
class EvalReport:
    psnr: list
    ssim: list
    meta: dict = field(default_factory=dict)
    lpips: list | None = None

    def __post_init__(self):
        if len(self.psnr) == 0 or len(self.psnr) != len(self.ssim):
            raise ConfigError("report needs a positive, equal number of PSNR and SSIM samples")

    @property
    def mean_psnr(self):
        return float(np.mean(self.psnr))

    @property
    def mean_ssim(self):
        return float(np.mean(self.ssim))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# meta: {json.dumps(self.meta, sort_keys=True)}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sample", "psnr", "ssim", "lpips"])
            lp = self.lpips or [None] * len(self.psnr)
            for i, (p, s, l) in enumerate(zip(self.psnr, self.ssim, lp)):
                writer.writerow([i, repr(float(p)), repr(float(s)), "" if l is None else repr(l)])
            writer.writerow(["mean", repr(self.mean_psnr), repr(self.mean_ssim), ""])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            first = fh.readline()
            meta = json.loads(first.split(":", 1)[1]) if first.startswith("# meta:") else {}
            rows = [r for r in csv.DictReader(fh) if r["sample"] != "mean"]
        lp = [float(r["lpips"]) if r["lpips"] else None for r in rows]
        return cls([float(r["psnr"]) for r in rows], [float(r["ssim"]) for r in rows], meta,
                   lp if any(v is not None for v in lp) else None)


def evaluate(recons, truths, meta=None, peak=1.0):
    """Per-sample PSNR/SSIM over aligned lists."""
    recons, truths = list(recons), list(truths)
    if len(recons) != len(truths):
        raise ConfigError(f"{len(recons)} reconstructions vs {len(truths)} ground truths")
    return EvalReport([psnr(r, t, peak) for r, t in zip(recons, truths)],
                      [ssim(r, t, peak) for r, t in zip(recons, truths)],
                      dict(meta or {}))


def format_table(rows):
    """Fixed-width table from ``[(method, condition, psnr, ssim), ...]``."""
    header = f"{'Method':<16} {'Meas.':<10} {'PSNR':>9} {'SSIM':>8}"
    lines = [header, "-" * len(header)]
    for method, cond, p, s in rows:
        lines.append(f"{method:<16} {cond:<10} {p:>9.4f} {s:>8.4f}")
    return "\n".join(lines) + "\n"
