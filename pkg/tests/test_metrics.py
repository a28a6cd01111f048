import numpy as np
import pytest

from oracles import sliding_ssim
from patchlens.exceptions import ConfigError, DimensionError
from patchlens.metrics import EvalReport, evaluate, format_table, psnr, ssim


def test_psnr_spot_values():
    a = np.zeros((10, 10))
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-12)
    assert psnr(a, a + 1.0, peak=255) == pytest.approx(48.1308, abs=1e-4)


def test_psnr_cap():
    a = np.ones((4, 4))
    assert psnr(a, a) == 99.0
    assert psnr(a, a + 1e-9) == 99.0


def test_ssim_matches_sliding_reference(rng):
    for _ in range(3):
        a = rng.random((20, 23))
        b = np.clip(a + 0.2 * rng.normal(size=a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(sliding_ssim(a, b), abs=1e-10)


def test_ssim_properties(rng):
    a = rng.random((16, 16))
    assert ssim(a, a) == 1.0
    b = rng.random((16, 16))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-14)
    assert ssim(a, b) < 0.5


def test_ssim_rgb_is_mean_of_channels(rng):
    a, b = rng.random((3, 16, 16)), rng.random((3, 16, 16))
    assert ssim(a, b) == pytest.approx(np.mean([ssim(x, y) for x, y in zip(a, b)]))


def test_metric_errors():
    with pytest.raises(DimensionError):
        psnr(np.ones((3, 3)), np.ones((3, 4)))
    with pytest.raises(DimensionError):
        ssim(np.ones((8, 8)), np.zeros((8, 8)))
    with pytest.raises(ConfigError):
        evaluate([np.ones((12, 12))], [])


def test_report_csv_roundtrip(tmp_path, rng):
    truths = [rng.random((12, 12)) for _ in range(3)]
    recons = [t + 0.05 * rng.normal(size=t.shape) for t in truths]
    report = evaluate(recons, truths, {"layout": "4x5", "fraction": 0.25})
    report.to_csv(tmp_path / "r.csv")
    back = EvalReport.from_csv(tmp_path / "r.csv")
    assert back.psnr == report.psnr and back.ssim == report.ssim
    assert back.meta == report.meta
    assert back.mean_psnr == report.mean_psnr


def test_identical_pair_report():
    x = np.full((12, 12), 0.5)
    report = evaluate([x], [x])
    assert report.psnr == [99.0] and report.ssim == [1.0]


def test_table_rows():
    table = format_table([("global-l2", "112x144", 29.5, 0.82), ("patch-l2", "112x144", 30.4, 0.84)])
    lines = table.strip().splitlines()
    assert len(lines) == 4
    assert lines[3].split() == ["patch-l2", "112x144", "30.4000", "0.8400"]
