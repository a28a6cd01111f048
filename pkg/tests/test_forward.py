import numpy as np
import pytest

from oracles import nested_convolution
from patchlens.core import SensorWindow, embed_window
from patchlens.exceptions import ConfigError, DimensionError
from patchlens.forward import (NoiseSpec, convolve_full, forward_global, forward_local,
                               preset_windows, truncation_series, window_for_fraction,
                               windows_for_fractions)
from patchlens.layout import PatchLayout
from patchlens.psf import PsfField, make_base_psf, synthesize_field


def test_convolution_matches_nested_loops(rng):
    for _ in range(5):
        scene = rng.random((int(rng.integers(1, 12)), int(rng.integers(1, 12))))
        psf = rng.random((int(rng.integers(1, 6)), int(rng.integers(1, 6))))
        np.testing.assert_allclose(convolve_full(scene, psf), nested_convolution(scene, psf),
                                   atol=1e-12)


def test_delta_psf_embeds_scene(rng):
    scene = rng.random((10, 12))
    psf = np.zeros((3, 3))
    psf[0, 0] = 1.0
    y = forward_global(scene, psf)
    assert y.shape == (12, 14)
    np.testing.assert_allclose(y[:10, :12], scene, atol=1e-14)
    np.testing.assert_allclose(y[10:], 0, atol=1e-14)


def test_local_model_with_equal_psfs_is_global(rng):
    scene = rng.random((20, 30))
    psf = make_base_psf("gaussian-speckle", 5, 5, seed=0)
    lay = PatchLayout(2, 3, 0, 20, 30)
    np.testing.assert_allclose(forward_local(scene, PsfField.uniform(psf, lay), lay),
                               forward_global(scene, psf), atol=1e-12)


def test_local_model_is_sum_of_patch_convolutions(rng):
    scene = rng.random((8, 9))
    lay = PatchLayout(2, 2, 0, 8, 9)
    field_ = synthesize_field(make_base_psf("gaussian-speckle", 3, 3, seed=1), lay, "blur-gradient", 1.0)
    expected = np.zeros((10, 11))
    for b, (r0, r1, c0, c1) in enumerate(lay.nominal_rects):
        part = np.zeros_like(scene)
        part[r0:r1, c0:c1] = scene[r0:r1, c0:c1]
        expected += nested_convolution(part, field_.local(b))
    np.testing.assert_allclose(forward_local(scene, field_, lay), expected, atol=1e-12)


def test_window_crops_and_noise_is_seeded(rng):
    scene = rng.random((10, 10))
    psf = make_base_psf("delta", 3, 3)
    w = SensorWindow(1, 2, 6, 5)
    clean = forward_global(scene, psf)
    np.testing.assert_allclose(forward_global(scene, psf, w), clean[1:7, 2:7], atol=1e-14)
    noise = NoiseSpec("gaussian", 0.1, seed=9)
    a = forward_global(scene, psf, w, noise)
    np.testing.assert_array_equal(a, forward_global(scene, psf, w, noise))
    assert np.std(a - clean[1:7, 2:7]) > 0.01
    with pytest.raises(DimensionError):
        forward_global(scene, psf, SensorWindow(0, 0, 20, 20))


def test_noise_spec_validation():
    with pytest.raises(ConfigError):
        NoiseSpec("poisson", 0.1)
    with pytest.raises(ConfigError):
        NoiseSpec("gaussian", -1.0)
    spec = NoiseSpec("gaussian", 1.0, seed=1)
    assert not np.array_equal(spec.for_index(0).sample((4,)), spec.for_index(1).sample((4,)))


def test_fraction_windows_keep_aspect_and_area():
    w = window_for_fraction((1280, 1480), 0.25)
    assert w.shape == (640, 740)
    assert (w.row_offset, w.col_offset) == (320, 370)
    assert window_for_fraction((112, 144), 1.0) == SensorWindow(0, 0, 112, 144)


def test_fraction_errors():
    with pytest.raises(ConfigError):
        window_for_fraction((10, 10), 1.2)
    with pytest.raises(ConfigError):
        window_for_fraction((10, 10), 0.0)
    with pytest.raises(ConfigError):
        windows_for_fractions((10, 10), [0.5, 1.0])


def test_phlatcam_preset_series():
    windows = preset_windows("phlatcam")
    assert [w.shape for w in windows] == [(1280, 1480), (600, 800), (400, 400)]
    full = 1280 * 1480
    assert windows[1].area / full == pytest.approx(0.25, abs=0.01)
    assert windows[2].area / full == pytest.approx(0.08, abs=0.01)


def test_diffusercam_preset_series():
    full, small = preset_windows("diffusercam")
    assert (small.row_offset, small.col_offset, small.shape) == (30, 40, (210, 400))
    assert small.area / full.area == pytest.approx(0.65, abs=0.01)


def test_truncation_series_nests_windows(rng):
    scene = rng.random((16, 16))
    lay = PatchLayout(2, 2, 0, 16, 16)
    field_ = PsfField.uniform(make_base_psf("gaussian-speckle", 5, 5), lay)
    series = truncation_series(scene, field_, lay, fractions=[1.0, 0.5, 0.1])
    full = series[0][1]
    for w, y in series:
        np.testing.assert_allclose(y, full[w.slices], atol=1e-14)
        np.testing.assert_allclose(embed_window(y, w, 20, 20)[w.slices], y)
    with pytest.raises(ConfigError):
        truncation_series(scene, field_, lay)
