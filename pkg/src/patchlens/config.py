"""Experiment configuration: flat ``section.key = value`` text.

Grammar
-------
One assignment per line, ``key = value``. Blank lines and lines starting with
``#`` are ignored; a ``#`` after a value starts a comment. Keys are dotted
paths from the table below, each may appear once. Lists are comma
separated; window shapes are written ``ROWSxCOLS``; ``none`` clears an
optional value; booleans are ``true``/``false``. Relative paths resolve
against the directory of the config file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from dataclasses import field as dc_field
from pathlib import Path

from .datasets import SCENE_KINDS
from .deconv import WIENER_LAMBDA
from .enhance import SCALE_KINDS, Enhancer, ScaleSchedule
from .exceptions import ConfigError
from .psf import BASE_KINDS, VARIATION_MODES


# -- value codecs ----------------------------------------------------------

def _int(text):
    return int(text)


def _float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("not finite")
    return value


def _bool(text):
    low = text.lower()
    if low not in ("true", "false"):
        raise ValueError("expected true or false")
    return low == "true"


def _split(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _shape(text):
    rows, cols = (int(v) for v in text.lower().split("x"))
    return rows, cols


def _optional(parse):
    def inner(text):
        return None if text.lower() == "none" else parse(text)
    return inner


def _list(parse):
    def inner(text):
        return tuple(parse(t) for t in _split(text))
    return inner


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{r}x{c}" for r, c in value)
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def _opt(parse, default, **meta):
    return dc_field(default=default, metadata={"parse": parse, **meta})


# -- sections --------------------------------------------------------------

@dataclass(frozen=True)
class SceneSection:
    source: str = _opt(str, "synthetic")
    kind: str = _opt(str, "natural-mix")
    count: int = _opt(_int, 64)
    rows: int = _opt(_int, 96)
    cols: int = _opt(_int, 128)
    dir: Path | None = _opt(_optional(Path), None, path=True)
    train_fraction: float = _opt(_float, 0.75)


@dataclass(frozen=True)
class PsfSection:
    kind: str = _opt(str, "gaussian-speckle")
    rows: int = _opt(_int, 17)
    cols: int = _opt(_int, 17)
    path: Path | None = _opt(_optional(Path), None, path=True)


@dataclass(frozen=True)
class FieldSection:
    mode: str = _opt(str, "shift")
    strength: float = _opt(_float, 0.0)
    by: int = _opt(_int, 4)
    bx: int = _opt(_int, 5)
    manifest: Path | None = _opt(_optional(Path), None, path=True)


@dataclass(frozen=True)
class LayoutSection:
    by: int = _opt(_int, None)
    bx: int = _opt(_int, None)
    overlap: int = _opt(_int, 16)


@dataclass(frozen=True)
class TruncationSection:
    fractions: tuple = _opt(_list(_float), (1.0,))
    windows: tuple | None = _opt(_optional(_list(_shape)), None)


@dataclass(frozen=True)
class NoiseSection:
    kind: str = _opt(str, "none")
    sigma: float = _opt(_float, 0.0)


@dataclass(frozen=True)
class FitSection:
    method: str = _opt(str, "l2")
    # l2/l1 regularization, relative to the mean measurement energy per bin
    lambda_: float = _opt(_float, 1e-4, key="lambda")
    lambda_mode: str = _opt(str, "relative")
    wiener_lambda: float = _opt(_float, WIENER_LAMBDA)
    correction_radius: int | None = _opt(_optional(_int), 4)
    epochs: int = _opt(_int, 200)
    lr: float = _opt(_float, 0.1)
    milestones: tuple = _opt(_list(_int), (50, 100, 150))
    gamma: float = _opt(_float, 0.1)
    huber_delta: float = _opt(_float, 1e-3)
    loss: str = _opt(str, "huber")
    tie_alpha: bool = _opt(_bool, False)


@dataclass(frozen=True)
class EnhanceSection:
    scales: tuple = _opt(_list(str), SCALE_KINDS)
    enhancers: tuple = _opt(_list(str), ("identity",) * 4)
    fuse_weight: float = _opt(_float, 0.5)


@dataclass(frozen=True)
class OutputSection:
    dir: Path = _opt(Path, Path("out"), path=True, must_exist=False)


_SECTIONS = {"scene": SceneSection, "psf": PsfSection, "field": FieldSection,
             "layout": LayoutSection, "truncation": TruncationSection, "noise": NoiseSection,
             "fit": FitSection, "enhance": EnhanceSection, "output": OutputSection}
_REQUIRED = ("layout.by", "layout.bx")


def _key(f):
    return f.metadata.get("key", f.name)


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneSection = dc_field(default_factory=SceneSection)
    psf: PsfSection = dc_field(default_factory=PsfSection)
    field: FieldSection = dc_field(default_factory=FieldSection)
    layout: LayoutSection = dc_field(default_factory=LayoutSection)
    truncation: TruncationSection = dc_field(default_factory=TruncationSection)
    noise: NoiseSection = dc_field(default_factory=NoiseSection)
    fit: FitSection = dc_field(default_factory=FitSection)
    enhance: EnhanceSection = dc_field(default_factory=EnhanceSection)
    output: OutputSection = dc_field(default_factory=OutputSection)
    seed: int = 0

    def __post_init__(self):
        _validate(self)

    def override(self, dotted, value):
        """Copy with one key replaced by an already-typed value (re-validated)."""
        if dotted == "seed":
            return replace(self, seed=value)
        section, name = dotted.split(".", 1)
        sec = getattr(self, section)
        attr = next(f.name for f in fields(sec) if _key(f) == name)
        return replace(self, **{section: replace(sec, **{attr: value})})

    @property
    def schedule(self):
        return ScaleSchedule.from_kinds(self.enhance.scales, self.layout.by, self.layout.bx,
                                        self.layout.overlap)

    @property
    def enhancers(self):
        return [Enhancer.parse(e) for e in self.enhance.enhancers]


def _fail(key, message):
    raise ConfigError(f"{key}: {message}")


def _validate(cfg):
    if cfg.seed < 0:
        _fail("seed", "must be >= 0")
    s = cfg.scene
    if s.source not in ("synthetic", "directory"):
        _fail("scene.source", f"expected synthetic or directory, got {s.source!r}")
    if s.source == "synthetic":
        if s.kind not in SCENE_KINDS:
            _fail("scene.kind", f"unknown kind {s.kind!r}; choose from {SCENE_KINDS}")
        if s.count < 2:
            _fail("scene.count", "need at least 2 scenes for a train/test split")
        if s.rows < 1 or s.cols < 1:
            _fail("scene.rows" if s.rows < 1 else "scene.cols", "must be >= 1")
    elif s.dir is None:
        _fail("scene.dir", "required when scene.source = directory")
    if not 0 < s.train_fraction < 1:
        _fail("scene.train_fraction", "must be in (0, 1)")
    p = cfg.psf
    if p.kind not in BASE_KINDS:
        _fail("psf.kind", f"unknown kind {p.kind!r}; choose from {BASE_KINDS}")
    if p.rows < 1 or p.cols < 1:
        _fail("psf.rows" if p.rows < 1 else "psf.cols", "must be >= 1")
    f = cfg.field
    if f.mode not in VARIATION_MODES:
        _fail("field.mode", f"unknown mode {f.mode!r}; choose from {VARIATION_MODES}")
    if f.strength < 0:
        _fail("field.strength", "must be >= 0")
    if f.by < 1 or f.bx < 1:
        _fail("field.by" if f.by < 1 else "field.bx", "must be >= 1")
    lay = cfg.layout
    for name in ("by", "bx"):
        value = getattr(lay, name)
        if value is None:
            _fail(f"layout.{name}", "required")
        if value < 1:
            _fail(f"layout.{name}", f"must be >= 1, got {value}")
    if lay.overlap < 0:
        _fail("layout.overlap", "must be >= 0")
    t = cfg.truncation
    if not t.fractions:
        _fail("truncation.fractions", "empty list")
    for frac in t.fractions:
        if not 0 < frac <= 1:
            _fail("truncation.fractions", f"{frac} is outside (0, 1]")
    if t.windows is not None and any(r < 1 or c < 1 for r, c in t.windows):
        _fail("truncation.windows", "window sides must be >= 1")
    n = cfg.noise
    if n.kind not in ("none", "gaussian"):
        _fail("noise.kind", f"expected none or gaussian, got {n.kind!r}")
    if n.sigma < 0:
        _fail("noise.sigma", "must be >= 0")
    ft = cfg.fit
    if ft.method not in ("wiener", "l2", "l1"):
        _fail("fit.method", f"expected wiener, l2 or l1, got {ft.method!r}")
    if ft.lambda_ < 0:
        _fail("fit.lambda", "must be >= 0")
    if ft.lambda_mode not in ("relative", "absolute"):
        _fail("fit.lambda_mode", f"expected relative or absolute, got {ft.lambda_mode!r}")
    if ft.wiener_lambda < 0:
        _fail("fit.wiener_lambda", "must be >= 0")
    if ft.correction_radius is not None and ft.correction_radius < 0:
        _fail("fit.correction_radius", "must be >= 0 or none")
    if ft.epochs < 0:
        _fail("fit.epochs", "must be >= 0")
    if ft.lr <= 0:
        _fail("fit.lr", "must be > 0")
    if list(ft.milestones) != sorted(ft.milestones) or any(m < 0 for m in ft.milestones):
        _fail("fit.milestones", "must be nonnegative and increasing")
    if not 0 < ft.gamma <= 1:
        _fail("fit.gamma", "must be in (0, 1]")
    if ft.huber_delta <= 0:
        _fail("fit.huber_delta", "must be > 0")
    if ft.loss not in ("huber", "l1"):
        _fail("fit.loss", f"expected huber or l1, got {ft.loss!r}")
    e = cfg.enhance
    try:
        schedule = ScaleSchedule.from_kinds(e.scales, lay.by, lay.bx, lay.overlap)
    except ConfigError as exc:
        _fail("enhance.scales", str(exc))
    if len(e.enhancers) != len(schedule):
        _fail("enhance.enhancers", f"{len(e.enhancers)} enhancers for {len(schedule)} scales")
    for spec in e.enhancers:
        try:
            Enhancer.parse(spec)
        except ConfigError as exc:
            _fail("enhance.enhancers", str(exc))
    if not 0 <= e.fuse_weight <= 1:
        _fail("enhance.fuse_weight", "must be in [0, 1]")


# -- text format -----------------------------------------------------------

def _field_table():
    table = {"seed": (None, None, _int)}
    for section, cls in _SECTIONS.items():
        for f in fields(cls):
            table[f"{section}.{_key(f)}"] = (section, f, f.metadata["parse"])
    return table


def loads(text, base_dir="."):
    """Parse config text; relative paths resolve against ``base_dir``."""
    table = _field_table()
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in table:
            raise ConfigError(f"{key}: unknown key (line {lineno})")
        if key in seen:
            raise ConfigError(f"{key}: repeated (line {lineno})")
        section, f, parse = table[key]
        try:
            parsed = parse(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from None
        if f is not None and f.metadata.get("path") and parsed is not None:
            parsed = (Path(base_dir) / parsed).resolve()
            if f.metadata.get("must_exist", True) and not parsed.exists():
                raise ConfigError(f"{key}: path does not exist: {parsed}")
        seen[key] = parsed
    seen.setdefault("output.dir", (Path(base_dir) / OutputSection.dir).resolve())
    for key in _REQUIRED:
        if key not in seen:
            raise ConfigError(f"{key}: required")
    sections = {name: {} for name in _SECTIONS}
    for key, value in seen.items():
        if key == "seed":
            continue
        section, f, _ = table[key]
        sections[section][f.name] = value
    return ExperimentConfig(**{name: _SECTIONS[name](**vals) for name, vals in sections.items()},
                            seed=seen.get("seed", 0))


def parse_config(path):
    """Read and validate a config file, applying defaults for absent keys."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text(), base_dir=path.parent)


def dump_config(cfg):
    """Every key with its value, in canonical order; ``loads(dump_config(c)) == c``."""
    lines = [f"seed = {cfg.seed}"]
    for section, cls in _SECTIONS.items():
        sec = getattr(cfg, section)
        lines.append("")
        for f in fields(cls):
            lines.append(f"{section}.{_key(f)} = {_fmt(getattr(sec, f.name))}")
    return "\n".join(lines) + "\n"
