"""Image quality metrics: PSNR and mean SSIM."""

import numpy as np
from scipy.signal import convolve2d

from .errors import ParameterError
from .validation import as_float_array, check_positive, check_same_shape

__all__ = ["psnr", "ssim"]


def psnr(a, b, data_range=1.0):
    """Peak signal-to-noise ratio in dB, +inf when the images are identical."""
    a = as_float_array(a, "a")
    b = as_float_array(b, "b")
    check_same_shape(a, b, "a", "b")
    check_positive(data_range, "data_range")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(data_range * data_range / mse)


def _gaussian_window(size, sigma):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a, b, data_range=1.0, window=11, sigma=1.5):
    """Mean structural similarity over all fully-interior windows.

    Local statistics use a normalized Gaussian window; only positions where
    the window fits entirely inside the image contribute, so the images must
    be at least `window` pixels in each dimension.
    """
    a = as_float_array(a, "a")
    b = as_float_array(b, "b")
    check_same_shape(a, b, "a", "b")
    check_positive(data_range, "data_range")
    check_positive(sigma, "sigma")
    if a.ndim != 2:
        raise ParameterError(f"expected 2-D images, got {a.ndim}-D")
    if not isinstance(window, (int, np.integer)) or window < 3 or window % 2 == 0:
        raise ParameterError(f"window must be an odd integer >= 3, got {window!r}")
    if min(a.shape) < window:
        raise ParameterError(
            f"images of shape {a.shape} are smaller than the {window}x{window} window"
        )

    kernel = _gaussian_window(int(window), float(sigma))
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    mu_a = convolve2d(a, kernel, mode="valid")
    mu_b = convolve2d(b, kernel, mode="valid")
    # E[x^2] - E[x]^2 form; tiny negative rounding is absorbed by c2.
    var_a = convolve2d(a * a, kernel, mode="valid") - mu_a * mu_a
    var_b = convolve2d(b * b, kernel, mode="valid") - mu_b * mu_b
    cov = convolve2d(a * b, kernel, mode="valid") - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
