import numpy as np
import pytest

from patchlens.core import ImageGrid
from patchlens.datasets import SCENE_KINDS, generate_scenes, load_pairs
from patchlens.exceptions import ConfigError, DataError
from patchlens.io import read_image, read_plg, sha256, write_image, write_plg, write_png


@pytest.mark.parametrize("kind", SCENE_KINDS)
def test_scenes_are_deterministic_and_in_range(kind):
    a = generate_scenes(kind, 3, 40, 50, seed=2)
    b = generate_scenes(kind, 3, 40, 50, seed=2)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(x.shape == (40, 50) and x.min() >= 0 and x.max() <= 1 for x in a)
    assert not np.array_equal(a[0], generate_scenes(kind, 1, 40, 50, seed=3)[0])


def test_stripes_period_from_autocorrelation():
    (img,) = generate_scenes("stripes", 1, 32, 96, seed=0, period=8, orientation="vertical")
    line = img[0] - img[0].mean()
    ac = [np.dot(line[:-lag], line[lag:]) / (len(line) - lag) for lag in range(1, 13)]
    assert int(np.argmax(ac)) + 1 == 8
    (hz,) = generate_scenes("stripes", 1, 32, 32, seed=0, period=8, orientation="horizontal")
    assert np.all(hz == hz[:, :1])


def test_scene_errors():
    with pytest.raises(ConfigError):
        generate_scenes("faces", 1, 8, 8)
    with pytest.raises(ConfigError):
        generate_scenes("checker", 0, 8, 8)


def test_plg_roundtrip_bytes(tmp_path, rng):
    data = rng.random((3, 5, 7))
    write_plg(tmp_path / "a.plg", data)
    raw = (tmp_path / "a.plg").read_bytes()
    assert raw[:4] == b"PLG1"
    assert np.frombuffer(raw[4:16], "<u4").tolist() == [5, 7, 3]
    assert len(raw) == 16 + 3 * 5 * 7 * 8
    assert np.array_equal(read_plg(tmp_path / "a.plg").data, data)


def test_plg_errors(tmp_path):
    (tmp_path / "bad.plg").write_bytes(b"PNG1" + bytes(12))
    with pytest.raises(DataError):
        read_plg(tmp_path / "bad.plg")
    write_plg(tmp_path / "ok.plg", np.ones((2, 2)))
    (tmp_path / "short.plg").write_bytes((tmp_path / "ok.plg").read_bytes()[:-1])
    with pytest.raises(DataError):
        read_plg(tmp_path / "short.plg")


@pytest.mark.parametrize("channels", [1, 3])
def test_png_roundtrip(tmp_path, rng, channels):
    data = np.round(rng.random((channels, 6, 9)) * 255) / 255
    write_png(tmp_path / "a.png", ImageGrid(data))
    np.testing.assert_allclose(read_image(tmp_path / "a.png").data, data, atol=1e-12)
    write_png(tmp_path / "b.png", ImageGrid(data), bits=16)
    np.testing.assert_allclose(read_image(tmp_path / "b.png").data, data, atol=1e-12)


def test_unknown_extension(tmp_path):
    with pytest.raises(DataError):
        read_image(tmp_path / "a.tif")


def _write_pairs(folder, keys, meas_shape=(27, 48), gt_shape=(21, 40)):
    folder.mkdir(exist_ok=True)
    for k in keys:
        write_image(folder / f"meas_{k}.plg", np.full(meas_shape, len(k) / 10))
        write_image(folder / f"gt_{k}.png", np.zeros(gt_shape))


def test_load_pairs_sorted_with_different_sizes(tmp_path):
    _write_pairs(tmp_path / "d", ["b", "a", "c"], (270, 480), (210, 400))
    pairs = load_pairs(tmp_path / "d")
    assert len(pairs) == 3
    assert pairs[0][0].data.shape == (1, 270, 480) and pairs[0][1].data.shape == (1, 210, 400)


def test_load_pairs_byte_order(tmp_path):
    _write_pairs(tmp_path / "d", ["a", "B", "aa"])
    pairs = load_pairs(tmp_path / "d")
    # "B" < "a" < "aa" in byte order.
    assert [p[0].data[0, 0, 0] for p in pairs] == [0.1, 0.1, 0.2]


def test_load_pairs_errors(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DataError):
        load_pairs(tmp_path / "empty")
    _write_pairs(tmp_path / "d", ["a", "b"])
    (tmp_path / "d" / "gt_b.png").unlink()
    with pytest.raises(DataError, match="meas_b"):
        load_pairs(tmp_path / "d")
    _write_pairs(tmp_path / "e", ["a"])
    write_image(tmp_path / "e" / "meas_z.plg", np.zeros((5, 5)))
    write_image(tmp_path / "e" / "gt_z.png", np.zeros((21, 40)))
    with pytest.raises(DataError, match="inconsistent"):
        load_pairs(tmp_path / "e")


def test_sha256_changes_with_content(tmp_path):
    write_plg(tmp_path / "a.plg", np.zeros((2, 2)))
    write_plg(tmp_path / "b.plg", np.ones((2, 2)))
    assert sha256(tmp_path / "a.plg") != sha256(tmp_path / "b.plg")
    assert len(sha256(tmp_path / "a.plg")) == 64
