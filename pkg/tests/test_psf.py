import warnings

import numpy as np
import pytest

from oracles import cross_correlation_peak
from patchlens.exceptions import ConfigError, DataError
from patchlens.io import write_plg
from patchlens.layout import PatchLayout
from patchlens.psf import (BASE_KINDS, PsfField, load_field, make_base_psf, read_manifest,
                           shift_psf, spectral_floor, synthesize_field, write_manifest)


@pytest.mark.parametrize("kind", BASE_KINDS)
def test_base_psf_is_unit_mass_and_nonnegative(kind):
    psf = make_base_psf(kind, 17, 17, seed=3)
    assert psf.shape == (17, 17)
    assert psf.min() >= 0
    assert psf.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", ["gaussian-speckle", "contour-rim"])
def test_random_psfs_are_well_conditioned_and_seeded(kind):
    a = make_base_psf(kind, 17, 17, seed=5)
    assert spectral_floor(a) > 1e-6
    np.testing.assert_array_equal(a, make_base_psf(kind, 17, 17, seed=5))
    assert not np.array_equal(a, make_base_psf(kind, 17, 17, seed=6))


def test_delta_psf_is_center_impulse():
    psf = make_base_psf("delta", 5, 7)
    assert psf[2, 3] == 1.0 and psf.sum() == 1.0


def test_unknown_kind():
    with pytest.raises(ConfigError):
        make_base_psf("airy", 5, 5)


def test_zero_strength_field_copies_base():
    base = make_base_psf("gaussian-speckle", 11, 11, seed=1)
    lay = PatchLayout(3, 4, 0, 48, 64)
    field_ = synthesize_field(base, lay, "shift", 0.0)
    for b in range(lay.n_patches):
        np.testing.assert_array_equal(field_.local(b), base)


def test_negative_strength_rejected():
    lay = PatchLayout(2, 2, 0, 16, 16)
    with pytest.raises(ConfigError):
        synthesize_field(make_base_psf("delta", 5, 5), lay, "shift", -1.0)
    with pytest.raises(ConfigError):
        synthesize_field(make_base_psf("delta", 5, 5), lay, "swirl", 1.0)


def test_shift_field_moves_corner_patch_by_strength():
    base = make_base_psf("gaussian-speckle", 31, 31, seed=2)
    lay = PatchLayout(4, 5, 0, 96, 128)
    field_ = synthesize_field(base, lay, "shift", 4.0)
    centers = np.array(lay.patch_centers()) - np.array([48.0, 64.0])
    radii = np.hypot(centers[:, 0], centers[:, 1])
    corner = int(np.argmax(radii))
    expected = 4.0 * centers[corner] / radii[corner]
    dy, dx = cross_correlation_peak(base, field_.local(corner))
    assert abs(dy - expected[0]) <= 0.5 + 1e-9 and abs(dx - expected[1]) <= 0.5 + 1e-9


def test_integer_shift_is_exact_translation():
    psf = np.zeros((9, 9))
    psf[4, 4] = 1.0
    moved = shift_psf(psf, 2, -1)
    assert np.unravel_index(np.argmax(moved), moved.shape) == (6, 3)
    assert moved.max() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("mode", ["rotate-warp", "blur-gradient"])
def test_other_modes_keep_unit_mass(mode):
    base = make_base_psf("contour-rim", 15, 15, seed=0)
    field_ = synthesize_field(base, PatchLayout(2, 3, 0, 32, 48), mode, 3.0)
    for b in range(6):
        assert field_.local(b).sum() == pytest.approx(1.0)
        assert field_.local(b).min() >= 0


def test_manifest_roundtrip(tmp_path):
    lay = PatchLayout(2, 3, 0, 32, 48)
    field_ = synthesize_field(make_base_psf("gaussian-speckle", 9, 9, seed=1), lay, "shift", 2.0, seed=4)
    write_manifest(tmp_path / "field.txt", field_, tmp_path)
    back = read_manifest(tmp_path / "field.txt", lay)
    np.testing.assert_allclose(back.locals_, field_.locals_, atol=1e-15)
    assert back.descriptor == {"mode": "shift", "strength": 2.0, "seed": 4}


def test_load_field_cleans_files(tmp_path):
    lay = PatchLayout(1, 1, 0, 8, 8)
    psf = np.array([[0.5, -0.1], [1.0, 0.5]])
    write_plg(tmp_path / "p.plg", psf)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        field_ = load_field(tmp_path / "p.plg", lay)
    assert len(caught) == 2
    assert field_.base.min() == 0 and field_.base.sum() == pytest.approx(1.0)
    write_plg(tmp_path / "z.plg", np.zeros((3, 3)))
    with pytest.raises(DataError):
        load_field(tmp_path / "z.plg", lay)


def test_field_layout_check():
    field_ = PsfField.uniform(np.ones((3, 3)) / 9, PatchLayout(2, 2, 0, 8, 8))
    with pytest.raises(ConfigError):
        field_.check_layout(PatchLayout(2, 3, 0, 8, 9))
