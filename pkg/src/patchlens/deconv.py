"""Patch-wise frequency-domain deconvolution with overlap-blend stitching.

Every patch ``b`` owns a complex kernel ``w_b`` on the deconvolution grid and
a real normalization coefficient ``alpha_b``. The reconstruction is

    X_hat = sum_b  weight_b * alpha_b * ifft2(w_b * fft2(Y))

restricted to each patch's extended rectangle, with ``weight_b`` the layout's
partition-of-unity blend weights. The scene occupies the top-left
``P x Q`` corner of the grid.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import embed_window, fft2, ifft2, support_shape
from .exceptions import ConfigError, DataError, DimensionError, NumericError
from .layout import PatchLayout

log = logging.getLogger(__name__)

BANK_MAGIC = b"PLKB"
_BANK_HEADER = struct.Struct("<4s8I")
_ZERO_ENERGY = 1e-24
# Wiener baselines regularize relative to the PSF power; l2/l1 fits use 1e-4.
WIENER_LAMBDA = 1.0


@dataclass(eq=False)
class KernelBank:
    """Per-patch kernels ``(channels, n_patches, rows, cols)`` and coefficients."""

    layout: PatchLayout
    kernels: np.ndarray
    norm_coeffs: np.ndarray
    fit_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=np.complex128)
        if self.kernels.ndim == 3:
            self.kernels = self.kernels[None]
        self.norm_coeffs = np.asarray(self.norm_coeffs, dtype=np.float64).reshape(
            self.kernels.shape[:2])
        if self.kernels.shape[1] != self.layout.n_patches:
            raise DimensionError(
                f"{self.kernels.shape[1]} kernels for a {self.layout.n_patches}-patch layout")
        rows, cols = self.grid_shape
        if rows < self.layout.scene_rows or cols < self.layout.scene_cols:
            raise DimensionError(f"grid {self.grid_shape} smaller than scene {self.layout.scene_shape}")
        if not (np.all(np.isfinite(self.norm_coeffs)) and np.all(self.norm_coeffs > 0)):
            raise NumericError("normalization coefficients must be finite and positive")

    @property
    def grid_shape(self):
        return self.kernels.shape[-2:]

    @property
    def channels(self):
        return self.kernels.shape[0]

    @property
    def parameter_count(self):
        """Real parameters: two per complex kernel bin plus one coefficient, per patch."""
        bins = self.grid_shape[0] * self.grid_shape[1]
        return self.channels * self.layout.n_patches * (2 * bins + 1)

    def save(self, path):
        lay = self.layout
        rows, cols = self.grid_shape
        with open(path, "wb") as fh:
            fh.write(_BANK_HEADER.pack(BANK_MAGIC, lay.bx, lay.by, lay.overlap, rows, cols,
                                       lay.scene_rows, lay.scene_cols, self.channels))
            for b in range(lay.n_patches):
                fh.write(self.kernels[:, b].astype("<c8").tobytes(order="C"))
                fh.write(self.norm_coeffs[:, b].astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        raw = Path(path).read_bytes()
        if len(raw) < _BANK_HEADER.size:
            raise DataError(f"{path}: truncated kernel bank header")
        magic, bx, by, overlap, rows, cols, srows, scols, channels = _BANK_HEADER.unpack_from(raw)
        if magic != BANK_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        layout = PatchLayout(by, bx, overlap, srows, scols)
        kbytes = channels * rows * cols * 8
        step = kbytes + channels * 8
        if len(raw) != _BANK_HEADER.size + layout.n_patches * step:
            raise DataError(f"{path}: size does not match header")
        kernels = np.empty((channels, layout.n_patches, rows, cols), dtype=np.complex128)
        alphas = np.empty((channels, layout.n_patches))
        pos = _BANK_HEADER.size
        for b in range(layout.n_patches):
            kernels[:, b] = np.frombuffer(raw, "<c8", channels * rows * cols, pos).reshape(
                channels, rows, cols)
            alphas[:, b] = np.frombuffer(raw, "<f8", channels, pos + kbytes)
            pos += step
        return cls(layout, kernels, alphas)


# -- kernels ---------------------------------------------------------------

def resolve_lambda(lam, energy, mode="relative"):
    """Absolute regularization; ``relative`` scales by the mean per-bin energy."""
    if not lam >= 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    if mode == "relative":
        return float(lam * np.mean(energy))
    if mode == "absolute":
        return float(lam)
    raise ConfigError(f"unknown lambda mode {mode!r}")


def wiener_kernel(psf, grid_rows, grid_cols, lam):
    """``conj(H) / (|H|^2 + lam)`` for the PSF zero-padded onto the grid."""
    if not lam >= 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    spec = fft2(psf, grid_rows, grid_cols)
    power = np.abs(spec) ** 2
    if lam == 0 and np.abs(spec).min() <= 1e-12:
        raise NumericError("PSF spectrum has zeros; unregularized inversion is singular")
    return np.conj(spec) / (power + lam)


def wiener_bank(psf, layout, grid_shape, lam=WIENER_LAMBDA, lam_mode="relative", channels=1):
    """Bank of Wiener kernels: shared for a 2D ``psf``, per patch for a :class:`PsfField`."""
    psfs = ([psf.local(b) for b in range(layout.n_patches)] if hasattr(psf, "local")
            else [np.asarray(psf)] * layout.n_patches)
    kernels = []
    for p in psfs:
        lam_abs = resolve_lambda(lam, np.abs(fft2(p, *grid_shape)) ** 2, lam_mode)
        kernels.append(wiener_kernel(p, grid_shape[0], grid_shape[1], lam_abs))
    kernels = np.broadcast_to(np.stack(kernels), (channels, layout.n_patches) + tuple(grid_shape))
    meta = {"method": "wiener", "lambda": float(lam), "lambda_mode": lam_mode, "iterations": 0}
    return KernelBank(layout, kernels.copy(), np.ones((channels, layout.n_patches)), meta)


def _as_stack(arr, what):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[:, None]
    if arr.ndim != 4:
        raise DimensionError(f"{what} must be (n, rows, cols) or (n, channels, rows, cols)")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} contains NaN or Inf")
    return arr


def _check_pairs(meas, scenes, layout):
    meas = _as_stack(meas, "measurements")
    scenes = _as_stack(scenes, "scenes")
    if len(meas) == 0:
        raise ConfigError("training set is empty")
    if len(meas) != len(scenes) or meas.shape[1] != scenes.shape[1]:
        raise DimensionError(f"measurements {meas.shape} and scenes {scenes.shape} are not paired")
    if scenes.shape[-2:] != layout.scene_shape:
        raise DimensionError(f"scenes {scenes.shape[-2:]} do not match layout {layout.scene_shape}")
    if meas.shape[-2] < layout.scene_rows or meas.shape[-1] < layout.scene_cols:
        raise DimensionError(f"grid {meas.shape[-2:]} smaller than scene {layout.scene_shape}")
    return meas, scenes


def _correction_kernel(z_pad, targets, rect, radius, reg, grid_shape):
    """Least-squares taps ``c`` with ``(Z * c)`` matching the targets inside ``rect``.

    ``z_pad`` is the wrap-padded global reconstruction stack, so circular shifts
    become slices. Returns the taps placed on the grid with the center at the
    origin.
    """
    r0, r1, c0, c1 = rect
    offsets = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    n_taps = len(offsets)
    gram = np.zeros((n_taps, n_taps))
    rhs = np.zeros(n_taps)
    for z, x in zip(z_pad, targets):
        cols = [z[r0 - dy + radius:r1 - dy + radius, c0 - dx + radius:c1 - dx + radius].ravel()
                for dy, dx in offsets]
        design = np.stack(cols, axis=1)
        gram += design.T @ design
        rhs += design.T @ x[r0:r1, c0:c1].ravel()
    mu = reg * np.trace(gram) / n_taps
    identity = np.zeros(n_taps)
    identity[n_taps // 2] = 1.0
    taps = np.linalg.solve(gram + mu * np.eye(n_taps), rhs + mu * identity)
    kernel = np.zeros(grid_shape)
    for t, (dy, dx) in zip(taps, offsets):
        kernel[dy % grid_shape[0], dx % grid_shape[1]] += t
    return kernel


def fit_kernels_l2(meas, scenes, layout, lam=1e-4, lam_mode="relative",
                   correction_radius=4, correction_reg=1e-6):
    """Least-squares kernel bank from embedded measurements and ground truth.

    First the per-frequency closed form
    ``w(f) = sum_i conj(Y_i(f)) X_i(f) / (sum_i |Y_i(f)|^2 + lam)``
    fitted over the whole scene. Each patch then refines it with a small
    spatial correction kernel (``(2r+1)^2`` taps) solved by least squares over
    the patch's extended rectangle, so ``w_b = w * fft2(correction_b)``.
    With ``correction_radius=None`` every patch keeps the closed form.

    Parameters
    ----------
    meas : array_like
        Measurements already embedded on the deconvolution grid,
        ``(n, rows, cols)`` or ``(n, channels, rows, cols)``.
    scenes : array_like
        Ground-truth scenes matching ``layout.scene_shape``.
    layout : PatchLayout
    lam : float
        Regularization, absolute or relative to the mean per-bin energy.
    correction_radius : int or None
    correction_reg : float
        Ridge weight pulling the correction towards identity, relative to the
        mean diagonal of its normal matrix.
    """
    meas, scenes = _check_pairs(meas, scenes, layout)
    grid = meas.shape[-2:]
    n_ch = meas.shape[1]
    kernels = np.empty((n_ch, layout.n_patches) + grid, dtype=np.complex128)
    lam_abs_all = []
    for ch in range(n_ch):
        y_spec = fft2(meas[:, ch])
        x_spec = fft2(scenes[:, ch], *grid)
        energy = np.sum(np.abs(y_spec) ** 2, axis=0)
        lam_abs = resolve_lambda(lam, energy, lam_mode)
        if lam_abs == 0 and energy.min() <= _ZERO_ENERGY * energy.max():
            raise NumericError("zero-energy frequency bin with lambda = 0")
        w0 = np.sum(np.conj(y_spec) * x_spec, axis=0) / (energy + lam_abs)
        lam_abs_all.append(lam_abs)
        if correction_radius is None:
            kernels[ch] = w0
            continue
        radius = int(correction_radius)
        z = ifft2(w0 * y_spec)
        z_pad = np.pad(z, ((0, 0), (radius, radius), (radius, radius)), mode="wrap")
        targets = np.zeros((len(scenes),) + grid)
        targets[:, : layout.scene_rows, : layout.scene_cols] = scenes[:, ch]
        for b, rect in enumerate(layout.extended_rects):
            corr = _correction_kernel(z_pad, targets, rect, radius, correction_reg, grid)
            kernels[ch, b] = w0 * np.fft.fft2(corr)
    meta = {"method": "l2", "lambda": float(lam), "lambda_mode": lam_mode,
            "lambda_abs": [float(v) for v in lam_abs_all],
            "correction_radius": correction_radius, "iterations": 0}
    bank = KernelBank(layout, kernels, np.ones((n_ch, layout.n_patches)), meta)
    bank.fit_meta["train_mse"] = float(np.mean((_reconstruct(bank, meas) - scenes) ** 2))
    return bank


# -- application -----------------------------------------------------------

def overlap_blend(patches, layout):
    """Fuse ``[(rect, raster), ...]`` with the layout's partition-of-unity weights."""
    patches = list(patches)
    if [tuple(r) for r, _ in patches] != list(layout.extended_rects):
        raise DimensionError("patch rectangles do not match the layout's extended rectangles")
    return layout.blend(raster for _, raster in patches)


def _reconstruct(bank, embedded):
    """Stitched reconstructions for a stack ``(n, channels, rows, cols)`` on the grid."""
    layout = bank.layout
    out = np.zeros(embedded.shape[:2] + layout.scene_shape)
    for ch in range(embedded.shape[1]):
        k_ch = ch if bank.channels > 1 else 0
        y_spec = fft2(embedded[:, ch])
        for b, (r0, r1, c0, c1) in enumerate(layout.extended_rects):
            raw = ifft2(bank.kernels[k_ch, b] * y_spec)
            out[:, ch, r0:r1, c0:c1] += layout.weights[b] * (
                bank.norm_coeffs[k_ch, b] * raw[:, r0:r1, c0:c1])
    return out


def apply_patch_deconv(meas, window, bank):
    """Embed the windowed measurement, filter per patch, blend, crop to the scene.

    ``meas`` is ``(rows, cols)`` or ``(channels, rows, cols)``; ``window=None``
    means the measurement already covers the whole deconvolution grid.
    """
    meas = np.asarray(meas, dtype=np.float64)
    grid = bank.grid_shape
    if window is None:
        if meas.shape[-2:] != grid:
            raise DimensionError(f"measurement {meas.shape[-2:]} does not match bank grid {grid}")
        embedded = meas
    else:
        embedded = embed_window(meas, window, *grid)
    squeeze = embedded.ndim == 2
    stack = embedded.reshape((1, -1) + grid)
    if bank.channels not in (1, stack.shape[1]):
        raise DimensionError(f"bank has {bank.channels} channels, measurement {stack.shape[1]}")
    out = _reconstruct(bank, stack)[0]
    return out[0] if squeeze else out


def global_filter(meas, window, kernel, scene_shape):
    """Single-kernel reconstruction ``ifft2(w * fft2(Y))`` cropped to the scene."""
    meas = np.asarray(meas, dtype=np.float64)
    grid = np.shape(kernel)[-2:]
    embedded = meas if window is None else embed_window(meas, window, *grid)
    return ifft2(kernel * fft2(embedded))[..., : scene_shape[0], : scene_shape[1]]


def wiener_deconvolve(meas, psf, scene_shape, window=None, lam=WIENER_LAMBDA, lam_mode="relative"):
    """Classical global Wiener deconvolution on the full support grid."""
    grid = support_shape(scene_shape, np.shape(psf))
    lam_abs = resolve_lambda(lam, np.abs(fft2(psf, *grid)) ** 2, lam_mode)
    kernel = wiener_kernel(psf, grid[0], grid[1], lam_abs)
    return global_filter(meas, window, kernel, scene_shape)


# -- smoothed-L1 refinement ------------------------------------------------

def _penalty(resid, delta, kind):
    if kind == "l1":
        return np.abs(resid), np.sign(resid)
    a = np.abs(resid)
    quad = a <= delta
    value = np.where(quad, 0.5 * resid ** 2 / delta, a - 0.5 * delta)
    grad = np.where(quad, resid / delta, np.sign(resid))
    return value, grad


def hermitian_part(spec):
    """Projection onto conjugate-symmetric spectra over the last two axes."""
    mirror = np.roll(np.flip(spec, axis=(-2, -1)), 1, axis=(-2, -1))
    return 0.5 * (spec + np.conj(mirror))


def stitched_objective(kernels, alphas, y_spec, scenes, layout, delta=1e-3, kind="huber",
                       need_grad=True):
    """Mean (Huber-smoothed) L1 error of the stitched reconstruction.

    Parameters
    ----------
    kernels : ndarray, complex ``(channels, n_patches, rows, cols)``
    alphas : ndarray ``(channels, n_patches)``
    y_spec : ndarray, complex ``(n, channels, rows, cols)``
        Spectra of the embedded measurements.
    scenes : ndarray ``(n, channels, P, Q)``

    Returns
    -------
    loss : float
    grad_kernels : ndarray or None
        ``dL/dRe(w) + 1j * dL/dIm(w)``.
    grad_alphas : ndarray or None
    """
    n, n_ch = scenes.shape[:2]
    count = scenes.size
    rects = layout.extended_rects
    raws = {}
    recon = np.zeros_like(scenes)
    for ch in range(n_ch):
        for b, (r0, r1, c0, c1) in enumerate(rects):
            raw = np.fft.ifft2(kernels[ch, b] * y_spec[:, ch]).real[:, r0:r1, c0:c1]
            raws[ch, b] = raw
            recon[:, ch, r0:r1, c0:c1] += layout.weights[b] * alphas[ch, b] * raw
    value, dvalue = _penalty(recon - scenes, delta, kind)
    loss = float(value.sum() / count)
    if not need_grad:
        return loss, None, None
    g = dvalue / count
    grid = y_spec.shape[-2:]
    grad_k = np.zeros_like(kernels)
    grad_a = np.zeros_like(alphas)
    for ch in range(n_ch):
        for b, (r0, r1, c0, c1) in enumerate(rects):
            local = layout.weights[b] * g[:, ch, r0:r1, c0:c1]
            grad_a[ch, b] = np.sum(local * raws[ch, b])
            back = np.zeros((n,) + grid)
            back[:, r0:r1, c0:c1] = alphas[ch, b] * local
            grad_k[ch, b] = np.conj(np.sum(y_spec[:, ch] * np.fft.ifft2(back), axis=0))
    # Exact in theory; the projection removes rounding asymmetry that Adam would amplify.
    return loss, hermitian_part(grad_k), grad_a


def fit_kernels_l1(meas, scenes, init, lr=0.1, epochs=200, huber_delta=1e-3,
                   milestones=(50, 100, 150), gamma=0.1, loss="huber", tie_alpha=False,
                   backoff=True, max_backoff=20):
    """Refine a bank by full-batch Adam on the stitched smoothed-L1 loss.

    Masks and blend weights are honored. The learning rate drops by ``gamma``
    at each milestone epoch. With ``backoff`` a step that raises the loss is
    rejected and retried at half the rate, so the returned loss never exceeds
    the initial one; without it, a loss above ``1e6`` times the initial
    raises :class:`NumericError`.
    """
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    if not lr > 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}")
    if loss == "huber" and not huber_delta > 0:
        raise ConfigError(f"huber_delta must be > 0, got {huber_delta}")
    if loss not in ("huber", "l1"):
        raise ConfigError(f"unknown loss {loss!r}")
    if epochs == 0:
        return init
    layout = init.layout
    meas, scenes = _check_pairs(meas, scenes, layout)
    if meas.shape[-2:] != tuple(init.grid_shape):
        raise DimensionError(f"measurement grid {meas.shape[-2:]} does not match bank {init.grid_shape}")
    n_ch = meas.shape[1]
    y_spec = fft2(meas)
    kernels = np.broadcast_to(init.kernels, (n_ch,) + init.kernels.shape[1:]).copy()
    alphas = np.broadcast_to(init.norm_coeffs, (n_ch, layout.n_patches)).copy()
    if tie_alpha:
        alphas[:] = alphas.mean()

    def evaluate(k, a):
        return stitched_objective(k, a, y_spec, scenes, layout, huber_delta, loss)

    current, gk, ga = evaluate(kernels, alphas)
    initial = current
    curve = [current]
    beta1, beta2 = 0.9, 0.999
    eps = 1e-8 * max(np.sqrt(np.mean(np.abs(gk) ** 2)), np.sqrt(np.mean(ga ** 2)), 1e-300)
    mk = np.zeros_like(kernels)
    vk = np.zeros(kernels.shape + (2,))
    ma = np.zeros_like(alphas)
    va = np.zeros_like(alphas)
    scale = 1.0
    step_count = 0
    for epoch in range(epochs):
        rate = lr * gamma ** sum(epoch >= m for m in milestones)
        if tie_alpha:
            ga = np.full_like(ga, ga.sum())
        step_count += 1
        mk_new = beta1 * mk + (1 - beta1) * gk
        vk_new = beta2 * vk + (1 - beta2) * np.stack([gk.real ** 2, gk.imag ** 2], axis=-1)
        ma_new = beta1 * ma + (1 - beta1) * ga
        va_new = beta2 * va + (1 - beta2) * ga ** 2
        c1, c2 = 1 - beta1 ** step_count, 1 - beta2 ** step_count
        mhat = mk_new / c1
        vhat = vk_new / c2
        dk = mhat.real / (np.sqrt(vhat[..., 0]) + eps) + 1j * mhat.imag / (np.sqrt(vhat[..., 1]) + eps)
        da = (ma_new / c1) / (np.sqrt(va_new / c2) + eps)
        accepted = False
        for _ in range(max_backoff if backoff else 1):
            cand_k = kernels - rate * scale * dk
            cand_a = alphas - rate * scale * da
            cand, cgk, cga = evaluate(cand_k, cand_a)
            if not backoff:
                if not np.isfinite(cand) or cand > 1e6 * initial:
                    raise NumericError(
                        f"L1 fit diverged at epoch {epoch}: loss {cand:.3e} vs initial {initial:.3e}")
                accepted = True
                break
            if np.isfinite(cand) and cand <= current and np.all(cand_a > 0):
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            log.info("l1 fit: no descent step found at epoch %d, stopping", epoch)
            break
        kernels, alphas, current, gk, ga = cand_k, cand_a, cand, cgk, cga
        mk, vk, ma, va = mk_new, vk_new, ma_new, va_new
        curve.append(current)
        log.debug("l1 fit epoch %d loss %.6e", epoch, current)
    if np.any(alphas <= 0):
        raise NumericError("normalization coefficient left the positive range")
    meta = dict(init.fit_meta)
    meta.update({"method": "l1", "loss": loss, "huber_delta": huber_delta, "lr": lr,
                 "iterations": len(curve) - 1, "initial_loss": initial, "final_loss": current,
                 "loss_curve": curve, "tie_alpha": tie_alpha})
    return KernelBank(layout, kernels, alphas, meta)


def training_loss(bank, meas, scenes, huber_delta=1e-3, loss="huber"):
    """Stitched smoothed-L1 loss of ``bank`` on embedded training pairs."""
    meas, scenes = _check_pairs(meas, scenes, bank.layout)
    kernels = np.broadcast_to(bank.kernels, (meas.shape[1],) + bank.kernels.shape[1:])
    alphas = np.broadcast_to(bank.norm_coeffs, (meas.shape[1], bank.layout.n_patches))
    value, _, _ = stitched_objective(kernels, alphas, fft2(meas), scenes, bank.layout,
                                     huber_delta, loss, need_grad=False)
    return value


def embed_stack(meas, window, grid):
    """Embed a stack of windowed measurements onto the deconvolution grid."""
    meas = np.asarray(meas, dtype=np.float64)
    if window is None:
        if meas.shape[-2:] != tuple(grid):
            raise DimensionError(f"measurements {meas.shape[-2:]} do not match grid {tuple(grid)}")
        return meas
    return embed_window(meas, window, *grid)

