from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from patchlens.config import dump_config, loads, parse_config
from patchlens.exceptions import ConfigError

MINIMAL = "scene.kind = stripes\nlayout.by = 4\nlayout.bx = 5\n"


def test_minimal_config_defaults(tmp_path):
    (tmp_path / "c.cfg").write_text(MINIMAL)
    cfg = parse_config(tmp_path / "c.cfg")
    assert cfg.layout.overlap == 16
    assert cfg.fit.lambda_ == 1e-4 and cfg.fit.lambda_mode == "relative"
    assert cfg.fit.wiener_lambda == 1.0
    assert cfg.noise.kind == "none" and cfg.noise.sigma == 0.0
    assert cfg.truncation.fractions == (1.0,)
    assert cfg.fit.milestones == (50, 100, 150) and cfg.fit.epochs == 200
    assert cfg.output.dir == (tmp_path / "out").resolve()


@pytest.mark.parametrize("text, key", [
    ("layout.by = 4\nlayout.bx = 0", "layout.bx"),
    (MINIMAL + "truncation.fractions = 1.0, 1.2", "truncation.fractions"),
    (MINIMAL + "colour = red", "colour"),
    (MINIMAL + "fit.lambda = lots", "fit.lambda"),
    (MINIMAL + "fit.method = adam", "fit.method"),
    (MINIMAL + "layout.by = 3", "layout.by"),
    ("layout.by = 4", "layout.bx"),
    (MINIMAL + "scene.source = directory", "scene.dir"),
    (MINIMAL + "enhance.enhancers = identity", "enhance.enhancers"),
    (MINIMAL + "enhance.scales = full, patches", "enhance.scales"),
    (MINIMAL + "fit.tie_alpha = maybe", "fit.tie_alpha"),
    (MINIMAL + "noise.sigma = nan", "noise.sigma"),
])
def test_schema_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        loads(text)


def test_missing_paths_rejected(tmp_path):
    with pytest.raises(ConfigError, match="psf.path"):
        loads(MINIMAL + "psf.path = nowhere.plg", tmp_path)
    (tmp_path / "p.plg").write_bytes(b"")
    assert loads(MINIMAL + "psf.path = p.plg", tmp_path).psf.path == (tmp_path / "p.plg").resolve()


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config(Path("/nonexistent/c.cfg"))


def test_comments_and_blank_lines():
    cfg = loads("# header\n\nlayout.by = 2  # rows\nlayout.bx=3\n")
    assert (cfg.layout.by, cfg.layout.bx) == (2, 3)
    with pytest.raises(ConfigError, match="line 1"):
        loads("layout.by 2\n")


def test_dump_roundtrip_full(tmp_path):
    text = MINIMAL + ("seed = 9\ntruncation.windows = 20x30, 10x10\nfit.correction_radius = none\n"
                      "enhance.enhancers = tv-denoise:0.1:20, identity, unsharp:1.0:0.5, identity\n"
                      "fit.tie_alpha = true\nnoise.kind = gaussian\nnoise.sigma = 0.01\n")
    cfg = loads(text, tmp_path)
    again = loads(dump_config(cfg), tmp_path)
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)
    assert cfg.truncation.windows == ((20, 30), (10, 10))
    assert cfg.fit.correction_radius is None


@given(by=st.integers(1, 8), bx=st.integers(1, 8), overlap=st.integers(0, 32),
       lam=st.floats(0, 10, allow_nan=False), fractions=st.lists(
           st.floats(1e-3, 1.0, allow_nan=False), min_size=1, max_size=4),
       seed=st.integers(0, 2 ** 63), method=st.sampled_from(["wiener", "l2", "l1"]))
def test_parse_dump_parse_fixed_point(by, bx, overlap, lam, fractions, seed, method):
    text = (f"seed = {seed}\nlayout.by = {by}\nlayout.bx = {bx}\nlayout.overlap = {overlap}\n"
            f"fit.lambda = {lam!r}\nfit.method = {method}\n"
            f"truncation.fractions = {', '.join(repr(f) for f in fractions)}\n")
    cfg = loads(text, "/tmp")
    assert loads(dump_config(cfg), "/tmp") == cfg


def test_override_revalidates():
    cfg = loads(MINIMAL)
    assert cfg.override("fit.method", "l1").fit.method == "l1"
    assert cfg.override("seed", 5).seed == 5
    with pytest.raises(ConfigError):
        cfg.override("layout.bx", 0)
