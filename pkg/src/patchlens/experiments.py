"""Desk-scale benchmark shared by the CLI and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SensorWindow, support_shape
from .datasets import generate_scenes
from .deconv import (WIENER_LAMBDA, apply_patch_deconv, embed_stack, fit_kernels_l1, fit_kernels_l2,
                     wiener_bank)
from .forward import NOISELESS, forward_local, windows_for_fractions
from .layout import PatchLayout
from .metrics import evaluate
from .psf import PsfField, make_base_psf, synthesize_field


@dataclass
class Benchmark:
    """Scenes, PSF field and full-support measurements with a train/test split."""

    scenes: np.ndarray
    field: object
    sim_layout: PatchLayout
    full: np.ndarray
    n_train: int
    meta: dict = field(default_factory=dict)

    @property
    def scene_shape(self):
        return self.scenes.shape[-2:]

    @property
    def support(self):
        return self.full.shape[-2:]

    @property
    def train(self):
        return slice(0, self.n_train)

    @property
    def test(self):
        return slice(self.n_train, len(self.scenes))

    def measurements(self, window=None):
        """Windowed measurements for every scene (noise already included)."""
        if window is None:
            return self.full
        return self.full[(...,) + window.slices]


def make_benchmark(n_scenes=64, scene_shape=(96, 128), psf_shape=(17, 17),
                   psf_kind="gaussian-speckle", field_mode="shift", strength=2.0,
                   field_grid=(4, 5), scene_kind="natural-mix", train_fraction=0.75,
                   noise=NOISELESS, seed=0, scenes=None):
    if scenes is None:
        scenes = generate_scenes(scene_kind, n_scenes, *scene_shape, seed=seed)
    scenes = np.asarray(scenes, dtype=np.float64)
    sim_layout = PatchLayout.from_grid(field_grid, scenes.shape[-2:], overlap=0)
    base = make_base_psf(psf_kind, *psf_shape, seed=seed)
    field_ = synthesize_field(base, sim_layout, field_mode, strength, seed=seed)
    full = np.stack([forward_local(x, field_, sim_layout, noise=noise.for_index(i))
                     for i, x in enumerate(scenes)])
    n_train = max(1, min(len(scenes) - 1, int(round(train_fraction * len(scenes)))))
    meta = {"scene_kind": scene_kind, "psf_kind": psf_kind, "field_mode": field_mode,
            "strength": float(strength), "seed": int(seed)}
    return Benchmark(scenes, field_, sim_layout, full, n_train, meta)


def local_field(field_, field_layout, layout):
    """Resample a PSF field onto ``layout`` by taking, for every patch, the local
    PSF of the field patch that contains its center."""
    centers = layout.patch_centers()
    picks = []
    for cy, cx in centers:
        for b, (r0, r1, c0, c1) in enumerate(field_layout.nominal_rects):
            if r0 <= cy < r1 and c0 <= cx < c1:
                picks.append(field_.local(b))
                break
    locals_ = np.stack(picks).reshape((layout.by, layout.bx) + field_.psf_shape)
    return PsfField(field_.base, locals_, dict(field_.descriptor))


def fit_bank(bench, grid, method="l2", overlap=16, window=None, lam=1e-4,
             lam_mode="relative", correction_radius=4, l1_options=None,
             wiener_lam=WIENER_LAMBDA, local_psfs=False):
    layout = PatchLayout.from_grid(grid, bench.scene_shape, overlap)
    if method == "wiener":
        psf = local_field(bench.field, bench.sim_layout, layout) if local_psfs else bench.field.base
        return wiener_bank(psf, layout, bench.support, wiener_lam, lam_mode)
    meas = embed_stack(bench.measurements(window)[bench.train], window, bench.support)
    bank = fit_kernels_l2(meas, bench.scenes[bench.train], layout, lam, lam_mode,
                          correction_radius=correction_radius)
    if method == "l1":
        bank = fit_kernels_l1(meas, bench.scenes[bench.train], bank, **(l1_options or {}))
    return bank


def reconstruct(bench, bank, window=None, which="test", clip=True):
    sel = bench.test if which == "test" else bench.train
    out = np.stack([apply_patch_deconv(y, window, bank)
                    for y in bench.measurements(window)[sel]])
    return np.clip(out, 0.0, 1.0) if clip else out


def score(bench, bank, window=None, meta=None):
    recon = reconstruct(bench, bank, window)
    return evaluate(recon, bench.scenes[bench.test], meta)


def truncation_windows(bench, fractions):
    return windows_for_fractions(bench.support, fractions)


def full_window(bench):
    return SensorWindow.full(support_shape(bench.scene_shape, bench.field.psf_shape))
