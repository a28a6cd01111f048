"""Command-line driver: simulate, fit, reconstruct, evaluate, sweep-patches.

Output directory layout::

    data/conditions.json      scene/grid shapes, split, one entry per sensor window
    data/gt/gt_NNNN.plg       ground-truth scenes
    data/meas/<cond>/         windowed measurements, meas_NNNN.plg
    data/psf/field.txt        PSF field manifest (+ PLG1 files), when known
    fit/<cond>/<variant>.plkb kernel banks, <variant>.json fit metadata, <variant>_loss.csv
    recon/<cond>/<variant>/   test-split reconstructions, recon_NNNN.plg
    eval/                     per-run report CSVs, summary.csv, table.txt, montage PNGs
    sweep/sweep.csv           patch-count sweep
    manifest.json             config snapshot, versions, seeds, timings, output checksums

Exit codes: 0 success, 1 usage or configuration, 2 data or dimensions, 3 numerics.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import cv2
import numpy as np
import scipy
import sklearn
from threadpoolctl import threadpool_limits

from . import __version__
from .config import dump_config, parse_config
from .core import SensorWindow, support_shape
from .datasets import generate_scenes, load_pairs
from .deconv import (KernelBank, apply_patch_deconv, embed_stack, fit_kernels_l1,
                     fit_kernels_l2, training_loss, wiener_bank)
from .enhance import enhance_hierarchical
from .exceptions import ConfigError, DataError, DimensionError, PatchLensError
from .experiments import local_field
from .forward import NoiseSpec, forward_local, windows_for_fractions
from .io import read_plg, sha256, write_plg, write_png
from .layout import PatchLayout
from .metrics import evaluate, format_table
from .psf import load_field, make_base_psf, read_manifest, synthesize_field, write_manifest

log = logging.getLogger("patchlens")

PEAK = 1.0


# -- manifest --------------------------------------------------------------

class RunManifest:
    """Accumulates what every command wrote; persisted as ``manifest.json``."""

    def __init__(self, out_dir, config):
        self.out_dir = Path(out_dir)
        self.path = self.out_dir / "manifest.json"
        state = json.loads(self.path.read_text()) if self.path.is_file() else {}
        self.timings = state.get("timings", {})
        self.outputs = state.get("outputs", {})
        self.commands = state.get("commands", [])
        self.config = dump_config(config)
        self.seeds = {"seed": config.seed}

    def record(self, paths):
        for p in paths:
            rel = Path(p).resolve().relative_to(self.out_dir.resolve()).as_posix()
            self.outputs[rel] = sha256(p)

    def time(self, stage, seconds):
        self.timings[stage] = round(float(seconds), 6)

    def verify(self):
        """Every listed file exists and still matches its checksum."""
        bad = [rel for rel, digest in self.outputs.items()
               if not (self.out_dir / rel).is_file() or sha256(self.out_dir / rel) != digest]
        if bad:
            raise DataError(f"manifest outputs missing or modified: {', '.join(sorted(bad))}")

    def save(self, command):
        self.commands.append(command)
        state = {
            "config": self.config,
            "versions": {"patchlens": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "scikit-learn": sklearn.__version__, "opencv": cv2.__version__},
            "seeds": self.seeds,
            "timings": self.timings,
            "commands": self.commands,
            "outputs": dict(sorted(self.outputs.items())),
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(state, indent=2, sort_keys=True) + "\n")


# -- data stage ------------------------------------------------------------

def _cond_name(window):
    return f"{window.rows}x{window.cols}"


def _build_field(cfg, scene_shape):
    """PSF field from a manifest, a PSF file, or the synthetic generator."""
    f = cfg.field
    field_layout = PatchLayout(f.by, f.bx, 0, *scene_shape)
    if f.manifest is not None:
        return read_manifest(f.manifest, field_layout), field_layout
    if cfg.psf.path is not None:
        base = load_field(cfg.psf.path, field_layout).base
    else:
        base = make_base_psf(cfg.psf.kind, cfg.psf.rows, cfg.psf.cols, seed=cfg.seed)
    return synthesize_field(base, field_layout, f.mode, f.strength, seed=cfg.seed), field_layout


def _split(cfg, n):
    return max(1, min(n - 1, int(round(cfg.scene.train_fraction * n))))


def cmd_simulate(cfg, manifest):
    """Write scenes, the PSF field and windowed measurements for every condition."""
    out = Path(cfg.output.dir) / "data"
    written = []
    conditions = []
    if cfg.scene.source == "synthetic":
        scenes = [s[None] for s in generate_scenes(cfg.scene.kind, cfg.scene.count,
                                                   cfg.scene.rows, cfg.scene.cols, seed=cfg.seed)]
        scene_shape = (cfg.scene.rows, cfg.scene.cols)
        field_, field_layout = _build_field(cfg, scene_shape)
        grid = support_shape(scene_shape, field_.psf_shape)
        if cfg.truncation.windows is not None:
            windows = [SensorWindow.centered(grid, w) for w in cfg.truncation.windows]
            fractions = [w.area / (grid[0] * grid[1]) for w in windows]
        else:
            fractions = list(cfg.truncation.fractions)
            windows = windows_for_fractions(grid, fractions)
        noise = NoiseSpec(cfg.noise.kind, cfg.noise.sigma, cfg.seed)
        measured = {}
        for w in windows:
            measured[_cond_name(w)] = [forward_local(x, field_, field_layout, w, noise.for_index(i))
                                       for i, x in enumerate(scenes)]
            conditions.append({"name": _cond_name(w), "fraction": fractions[len(conditions)],
                               "window": [w.row_offset, w.col_offset, w.rows, w.cols]})
        written += write_manifest(out / "psf" / "field.txt", field_, out / "psf")
        written.append(out / "psf" / "field.txt")
    else:
        pairs = load_pairs(cfg.scene.dir)
        scenes = [gt.data for _, gt in pairs]
        scene_shape = scenes[0].shape[-2:]
        grid = pairs[0][0].data.shape[-2:]
        if grid[0] < scene_shape[0] or grid[1] < scene_shape[1]:
            raise DimensionError(f"measurements {grid} smaller than ground truth {scene_shape}")
        w = SensorWindow.full(grid)
        measured = {_cond_name(w): [m.data for m, _ in pairs]}
        conditions.append({"name": _cond_name(w), "fraction": 1.0,
                           "window": [0, 0, grid[0], grid[1]]})
        psf_source = cfg.field.manifest or cfg.psf.path
        if psf_source is not None:
            field_, _ = _build_field(cfg, scene_shape)
            written += write_manifest(out / "psf" / "field.txt", field_, out / "psf")
            written.append(out / "psf" / "field.txt")
    (out / "gt").mkdir(parents=True, exist_ok=True)
    for i, x in enumerate(scenes):
        write_plg(out / "gt" / f"gt_{i:04d}.plg", x)
        written.append(out / "gt" / f"gt_{i:04d}.plg")
    for name, meas in measured.items():
        (out / "meas" / name).mkdir(parents=True, exist_ok=True)
        for i, y in enumerate(meas):
            path = out / "meas" / name / f"meas_{i:04d}.plg"
            write_plg(path, y)
            written.append(path)
    info = {"scene_shape": list(scene_shape), "grid": list(grid), "count": len(scenes),
            "n_train": _split(cfg, len(scenes)), "field_grid": [cfg.field.by, cfg.field.bx],
            "conditions": conditions}
    (out / "conditions.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    written.append(out / "conditions.json")
    manifest.record(written)
    log.info("simulated %d scenes under %d conditions", len(scenes), len(conditions))
    return written


class Dataset:
    """Simulated (or ingested) data read back from ``<out>/data``."""

    def __init__(self, out_dir):
        root = Path(out_dir) / "data"
        info_path = root / "conditions.json"
        if not info_path.is_file():
            raise DataError(f"{info_path} not found; run 'simulate' first")
        self.root = root
        self.info = json.loads(info_path.read_text())
        self.scene_shape = tuple(self.info["scene_shape"])
        self.grid = tuple(self.info["grid"])
        self.n_train = self.info["n_train"]
        self.scenes = np.stack([read_plg(root / "gt" / f"gt_{i:04d}.plg").data
                                for i in range(self.info["count"])])
        self.windows = {c["name"]: SensorWindow(*c["window"]) for c in self.info["conditions"]}
        self._meas = {}

    @property
    def conditions(self):
        return list(self.windows)

    def measurements(self, cond):
        if cond not in self._meas:
            folder = self.root / "meas" / cond
            self._meas[cond] = np.stack([read_plg(folder / f"meas_{i:04d}.plg").data
                                         for i in range(len(self.scenes))])
        return self._meas[cond]

    def field(self, layout):
        path = self.root / "psf" / "field.txt"
        if not path.is_file():
            return None
        by, bx = self.info["field_grid"]
        field_layout = PatchLayout(by, bx, 0, *self.scene_shape)
        field_ = read_manifest(path, field_layout)
        if (layout.by, layout.bx) == (1, 1):
            return field_.base
        return local_field(field_, field_layout, layout)


def _dataset(cfg, manifest):
    if not (Path(cfg.output.dir) / "data" / "conditions.json").is_file():
        cmd_simulate(cfg, manifest)
    return Dataset(cfg.output.dir)


# -- fitting ---------------------------------------------------------------

def _variants(cfg):
    """``(name, (by, bx))`` pairs: the configured layout and the 1x1 baseline."""
    method = cfg.fit.method
    out = []
    if (cfg.layout.by, cfg.layout.bx) != (1, 1):
        out.append((f"patch-{method}", (cfg.layout.by, cfg.layout.bx)))
    out.append((f"global-{method}", (1, 1)))
    return out


def fit_one(cfg, data, cond, grid_counts):
    """Fit a bank for one condition and layout; returns ``(bank, loss_curve)``."""
    layout = PatchLayout.from_grid(grid_counts, data.scene_shape, cfg.layout.overlap)
    ft = cfg.fit
    window = data.windows[cond]
    train = slice(0, data.n_train)
    meas = embed_stack(data.measurements(cond)[train], window, data.grid)
    scenes = data.scenes[train]
    if ft.method == "wiener":
        psf = data.field(layout)
        if psf is None:
            raise ConfigError("fit.method: wiener needs a PSF (psf.path or field.manifest)")
        bank = wiener_bank(psf, layout, data.grid, ft.wiener_lambda, "relative",
                           channels=scenes.shape[1])
    else:
        bank = fit_kernels_l2(meas, scenes, layout, ft.lambda_, ft.lambda_mode,
                              correction_radius=ft.correction_radius)
    base_loss = training_loss(bank, meas, scenes, ft.huber_delta, ft.loss)
    bank.fit_meta["training_loss"] = base_loss
    if ft.method != "l1":
        return bank, [base_loss]
    refined = fit_kernels_l1(meas, scenes, bank, lr=ft.lr, epochs=ft.epochs,
                             huber_delta=ft.huber_delta, milestones=ft.milestones,
                             gamma=ft.gamma, loss=ft.loss, tie_alpha=ft.tie_alpha)
    if refined is bank:
        return bank, [base_loss]
    refined.fit_meta["l2_training_loss"] = base_loss
    refined.fit_meta["training_loss"] = refined.fit_meta["final_loss"]
    return refined, list(refined.fit_meta["loss_curve"])


def _json_meta(bank):
    meta = {k: v for k, v in bank.fit_meta.items() if k != "loss_curve"}
    meta["parameter_count"] = bank.parameter_count
    meta["layout"] = f"{bank.layout.by}x{bank.layout.bx}"
    meta["overlap"] = bank.layout.overlap
    return json.dumps(meta, indent=2, sort_keys=True) + "\n"


def cmd_fit(cfg, manifest):
    data = _dataset(cfg, manifest)
    written = []
    for cond in data.conditions:
        folder = Path(cfg.output.dir) / "fit" / cond
        folder.mkdir(parents=True, exist_ok=True)
        for name, counts in _variants(cfg):
            bank, curve = fit_one(cfg, data, cond, counts)
            bank.save(folder / f"{name}.plkb")
            (folder / f"{name}.json").write_text(_json_meta(bank))
            with open(folder / f"{name}_loss.csv", "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["epoch", "loss"])
                writer.writerows((i, repr(float(v))) for i, v in enumerate(curve))
            written += [folder / f"{name}.plkb", folder / f"{name}.json", folder / f"{name}_loss.csv"]
            log.info("fit %s/%s: loss %.6g", cond, name, curve[-1])
    manifest.record(written)
    return written


# -- reconstruction --------------------------------------------------------

def reconstruct_stack(cfg, bank, meas, window):
    """Deconvolve, optionally enhance, clip to ``[0, PEAK]``."""
    enhancers = cfg.enhancers
    active = any(not e.is_identity for e in enhancers)
    out = []
    for y in meas:
        x = apply_patch_deconv(y, window, bank)
        if active:
            x = enhance_hierarchical(x, cfg.schedule, enhancers, cfg.enhance.fuse_weight)
        out.append(np.clip(x, 0.0, PEAK))
    return np.stack(out)


def _check_bank(bank, data, path):
    if tuple(bank.grid_shape) != data.grid or bank.layout.scene_shape != data.scene_shape:
        raise DimensionError(
            f"{path}: bank grid {tuple(bank.grid_shape)} / scene {bank.layout.scene_shape} "
            f"does not match data grid {data.grid} / scene {data.scene_shape}")


def cmd_reconstruct(cfg, manifest, bank_path=None):
    data = Dataset(cfg.output.dir)
    jobs = []
    if bank_path is not None:
        bank_path = Path(bank_path)
        if not bank_path.is_file():
            raise DataError(f"{bank_path}: no such bank file")
        jobs = [(cond, bank_path) for cond in data.conditions]
    else:
        for cond in data.conditions:
            jobs += [(cond, p) for p in sorted((Path(cfg.output.dir) / "fit" / cond).glob("*.plkb"))]
        if not jobs:
            raise DataError("no kernel banks found; run 'fit' first")
    written = []
    test = slice(data.n_train, len(data.scenes))
    n_images = 0
    started = time.perf_counter()
    for cond, path in jobs:
        bank = KernelBank.load(path)
        _check_bank(bank, data, path)
        recon = reconstruct_stack(cfg, bank, data.measurements(cond)[test], data.windows[cond])
        folder = Path(cfg.output.dir) / "recon" / cond / path.stem
        folder.mkdir(parents=True, exist_ok=True)
        for i, x in zip(range(data.n_train, len(data.scenes)), recon):
            write_plg(folder / f"recon_{i:04d}.plg", x)
            written.append(folder / f"recon_{i:04d}.plg")
        n_images += len(recon)
    if n_images:
        manifest.time("reconstruct_per_image", (time.perf_counter() - started) / n_images)
    manifest.record(written)
    return written


# -- evaluation ------------------------------------------------------------

def _to_display(img, shape):
    img = np.asarray(img, dtype=np.float64)
    top = img.max()
    img = img / top if top > 0 else img
    planes = [cv2.resize(p, (shape[1], shape[0]), interpolation=cv2.INTER_AREA) for p in img]
    return np.stack(planes)


def write_montage(path, tiles, gap=2):
    """Side-by-side PNG of equally sized ``(channels, rows, cols)`` tiles."""
    channels = max(t.shape[0] for t in tiles)
    tiles = [np.broadcast_to(t, (channels,) + t.shape[1:]) for t in tiles]
    spacer = np.ones((channels, tiles[0].shape[1], gap))
    parts = []
    for t in tiles:
        parts += [t, spacer]
    write_png(path, np.concatenate(parts[:-1], axis=2))


def cmd_evaluate(cfg, manifest):
    data = Dataset(cfg.output.dir)
    out = Path(cfg.output.dir) / "eval"
    out.mkdir(parents=True, exist_ok=True)
    test = list(range(data.n_train, len(data.scenes)))
    rows, written = [], []
    for cond in data.conditions:
        folder = Path(cfg.output.dir) / "recon" / cond
        variants = sorted(p.name for p in folder.iterdir() if p.is_dir()) if folder.is_dir() else []
        if not variants:
            raise DataError(f"{folder}: no reconstructions; run 'reconstruct' first")
        firsts = {}
        for variant in variants:
            paths = [folder / variant / f"recon_{i:04d}.plg" for i in test]
            missing = [str(p) for p in paths if not p.is_file()]
            if missing:
                raise DataError(f"missing reconstructions: {', '.join(missing)}")
            recon = [read_plg(p).data for p in paths]
            firsts[variant] = recon[0]
            report = evaluate(recon, data.scenes[test], {"condition": cond, "method": variant},
                              peak=PEAK)
            report.to_csv(out / f"report_{cond}_{variant}.csv")
            written.append(out / f"report_{cond}_{variant}.csv")
            rows.append((variant, cond, report.mean_psnr, report.mean_ssim))
        ordered = sorted(firsts, key=lambda v: (not v.startswith("global"), v))
        meas = data.measurements(cond)[test[0]]
        tiles = [data.scenes[test[0]], _to_display(meas, data.scene_shape)]
        tiles += [firsts[v] for v in ordered]
        write_montage(out / f"montage_{cond}.png", tiles)
        written.append(out / f"montage_{cond}.png")
    (out / "table.txt").write_text(format_table(rows))
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "condition", "psnr", "ssim"])
        writer.writerows((m, c, repr(p), repr(s)) for m, c, p, s in rows)
    written += [out / "table.txt", out / "summary.csv"]
    sys.stdout.write(format_table(rows))
    manifest.record(written)
    return written


# -- patch-count sweep -----------------------------------------------------

def cmd_sweep_patches(cfg, manifest, n_list):
    """Fit, reconstruct and score ``N x (N+1)`` layouts on the first condition."""
    n_list = list(n_list)
    if not n_list or any(n < 1 for n in n_list):
        raise ConfigError(f"--n-list must hold positive integers, got {n_list}")
    data = _dataset(cfg, manifest)
    cond = data.conditions[0]
    test = slice(data.n_train, len(data.scenes))
    rows = []
    for n in n_list:
        bank, _ = fit_one(cfg, data, cond, (n, n + 1))
        recon = reconstruct_stack(cfg, bank, data.measurements(cond)[test], data.windows[cond])
        report = evaluate(recon, data.scenes[test], peak=PEAK)
        rows.append([n, f"{n}x{n + 1}", repr(report.mean_psnr), repr(report.mean_ssim),
                     bank.parameter_count])
        log.info("sweep N=%d: %.4f dB", n, report.mean_psnr)
    out = Path(cfg.output.dir) / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["N", "layout", "psnr", "ssim", "parameter_count"])
        writer.writerows(rows)
    manifest.record([out / "sweep.csv"])
    return [out / "sweep.csv"]


# -- entry point -----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _n_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    parser = _Parser(prog="patchlens", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("simulate", "fit", "reconstruct", "evaluate", "sweep-patches"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="master seed (overrides seed)")
        p.add_argument("--threads", type=int, help="cap on BLAS/OpenMP worker threads")
        p.add_argument("--method", choices=("wiener", "l2", "l1"), help="overrides fit.method")
        if name == "reconstruct":
            p.add_argument("--bank", help="reconstruct every condition with this bank only")
        if name == "sweep-patches":
            p.add_argument("--n-list", type=_n_list, default=[1, 2, 3, 4],
                           help="comma-separated N values, layouts are N x (N+1)")
    return parser


def _configure_logging():
    level = os.environ.get("PATCHLENS_LOG", "WARNING").upper()
    numeric = int(level) if level.isdigit() else logging.getLevelName(level)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    logging.basicConfig(level=numeric, format="%(levelname)s %(name)s: %(message)s")


def run(args):
    cfg = parse_config(args.config)
    if args.out is not None:
        cfg = cfg.override("output.dir", Path(args.out).resolve())
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        cfg = cfg.override("seed", args.seed)
    if args.method is not None:
        cfg = cfg.override("fit.method", args.method)
    if args.threads is not None and args.threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {args.threads}")
    manifest = RunManifest(cfg.output.dir, cfg)
    limits = threadpool_limits(args.threads) if args.threads else nullcontext()
    started = time.perf_counter()
    with limits:
        if args.command == "simulate":
            cmd_simulate(cfg, manifest)
        elif args.command == "fit":
            cmd_fit(cfg, manifest)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg, manifest, args.bank)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, manifest)
        else:
            cmd_sweep_patches(cfg, manifest, args.n_list)
    manifest.time(args.command, time.perf_counter() - started)
    manifest.verify()
    manifest.save(args.command)


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except PatchLensError as exc:
        print(f"patchlens: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"patchlens: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
