import math

import numpy as np
import pytest

from nsmi.errors import ParameterError, ShapeError
from nsmi.metrics import psnr, ssim


def naive_ssim(a, b, data_range=1.0, window=11, sigma=1.5):
    # Brute-force sliding window, written independently of the library:
    # weighted local stats at every fully-interior position.
    r = np.arange(window) - (window - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    kernel = kernel / kernel.sum()
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    half = window // 2
    vals = []
    for i in range(half, a.shape[0] - half):
        for j in range(half, a.shape[1] - half):
            pa = a[i - half:i + half + 1, j - half:j + half + 1]
            pb = b[i - half:i + half + 1, j - half:j + half + 1]
            mu_a = (kernel * pa).sum()
            mu_b = (kernel * pb).sum()
            var_a = (kernel * pa * pa).sum() - mu_a * mu_a
            var_b = (kernel * pb * pb).sum() - mu_b * mu_b
            cov = (kernel * pa * pb).sum() - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def test_psnr_identical_is_infinite():
    a = np.linspace(0.0, 1.0, 30).reshape(5, 6)
    assert psnr(a, a.copy()) == float("inf")


def test_psnr_hand_value():
    a = np.zeros((4, 4))
    b = np.full((4, 4), 0.5)
    # mse = 0.25, so 10*log10(1/0.25) = 20*log10(2)
    np.testing.assert_allclose(psnr(a, b), 20.0 * math.log10(2.0), rtol=1e-12)
    np.testing.assert_allclose(
        psnr(a, b, data_range=2.0),
        20.0 * math.log10(2.0) + 10.0 * math.log10(4.0),
        rtol=1e-12,
    )


def test_psnr_symmetric():
    rng = np.random.default_rng(7)
    for _ in range(5):
        a = rng.random((8, 9))
        b = rng.random((8, 9))
        assert psnr(a, b) == psnr(b, a)


def test_ssim_self_is_one():
    rng = np.random.default_rng(3)
    a = rng.random((16, 16))
    assert ssim(a, a.copy()) == 1.0


def test_ssim_matches_naive_sliding_window():
    rng = np.random.default_rng(11)
    for _ in range(4):
        a = rng.random((16, 18))
        b = np.clip(a + 0.2 * rng.standard_normal((16, 18)), 0.0, 1.0)
        np.testing.assert_allclose(ssim(a, b), naive_ssim(a, b), atol=1e-8)
    # Non-default window and data range.
    a = rng.random((15, 15)) * 3.0
    b = a + 0.3 * rng.standard_normal((15, 15))
    np.testing.assert_allclose(
        ssim(a, b, data_range=3.0, window=7, sigma=1.1),
        naive_ssim(a, b, data_range=3.0, window=7, sigma=1.1),
        atol=1e-8,
    )


def test_ssim_degrades_with_noise():
    rng = np.random.default_rng(5)
    base = rng.random((24, 24))
    noise = rng.standard_normal((24, 24))
    scores = [ssim(base, base + s * noise) for s in (0.05, 0.15, 0.45)]
    assert scores[0] > scores[1] > scores[2]
    assert all(s < 1.0 for s in scores)


def test_metric_validation_errors():
    a = np.zeros((12, 12))
    with pytest.raises(ShapeError):
        psnr(a, np.zeros((12, 13)))
    with pytest.raises(ParameterError):
        psnr(a, a, data_range=0.0)
    with pytest.raises(ParameterError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))  # smaller than the default window
    with pytest.raises(ParameterError):
        ssim(a, a, window=4)
    with pytest.raises(ParameterError):
        ssim(np.zeros(5), np.zeros(5))


def test_psnr_strictly_decreases_with_noise_level():
    rng = np.random.default_rng(11)
    base = rng.random((24, 24))
    noise = rng.standard_normal((24, 24))
    scores = [psnr(base, base + s * noise) for s in (0.01, 0.05, 0.1)]
    assert scores[0] > scores[1] > scores[2]


def test_ssim_stays_within_unit_interval():
    for seed in range(6):
        rng = np.random.default_rng(seed)
        a = rng.random((16, 16))
        b = rng.random((16, 16)) if seed % 2 else -a + 0.5
        s = ssim(a, b)
        assert -1.0 <= s <= 1.0
