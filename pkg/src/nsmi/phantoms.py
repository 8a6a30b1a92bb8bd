"""Synthetic test images built from analytic ellipse layouts."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .validation import as_float_array

__all__ = [
    "PhantomSpec",
    "SHEPP_LOGAN_ELLIPSES",
    "render_phantom",
    "shepp_logan",
    "random_phantom",
    "make_condition_pair",
]

# Each row: (intensity, half_axis_x, half_axis_y, center_x, center_y, angle_rad)
# in normalized coordinates where the image spans [-1, 1] on both axes.
# Contrast-enhanced head layout: one bright shell, a darker interior, and
# small low-contrast inserts.
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, np.deg2rad(-18.0)),
    (-0.2, 0.16, 0.41, -0.22, 0.0, np.deg2rad(18.0)),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


@dataclass(frozen=True)
class PhantomSpec:
    """Ellipse layout plus a seed for the randomized variants.

    size: image side length in pixels, >= 8.
    ellipses: tuple of (intensity, a, b, cx, cy, angle) rows, additive.
    seed: drives the deterministic perturbation in random_phantom.
    """

    size: int
    ellipses: tuple = SHEPP_LOGAN_ELLIPSES
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.size, (int, np.integer)) or self.size < 8:
            raise ParameterError(f"size must be an int >= 8, got {self.size!r}")
        if len(self.ellipses) == 0:
            raise ParameterError("ellipses must be nonempty")
        for row in self.ellipses:
            if len(row) != 6:
                raise ParameterError(f"ellipse row must have 6 entries, got {row!r}")
            if row[1] <= 0 or row[2] <= 0:
                raise ParameterError(f"ellipse half-axes must be positive, got {row!r}")


def render_phantom(spec):
    """Rasterize the ellipse layout onto a size x size grid, clamped to [0, 1].

    Pixel centers sit at ((2j - n + 1)/n, (n - 1 - 2i)/n) so the total mass of
    a fixed layout scales with n^2 up to rasterization error at the edges.
    Background pixels (outside every ellipse) are exactly 0.
    """
    n = int(spec.size)
    coords = (2.0 * np.arange(n) - n + 1) / n
    xs = coords[np.newaxis, :]
    ys = coords[::-1, np.newaxis]
    out = np.zeros((n, n))
    for intensity, a, b, cx, cy, angle in spec.ellipses:
        dx = xs - cx
        dy = ys - cy
        c, s = np.cos(angle), np.sin(angle)
        u = (dx * c + dy * s) / a
        v = (-dx * s + dy * c) / b
        out[u * u + v * v <= 1.0] += intensity
    return np.clip(out, 0.0, 1.0)


def shepp_logan(n):
    """Standard head phantom at resolution n, values in [0, 1]."""
    return render_phantom(PhantomSpec(size=n))


def random_phantom(spec):
    """Render a deterministic perturbation of the layout, driven by spec.seed.

    Centers jitter by up to 0.04, half-axes and intensities scale by up to
    15%, and angles tilt by up to 10 degrees. The same spec always yields the
    same image.
    """
    rng = np.random.default_rng(spec.seed)
    perturbed = []
    for intensity, a, b, cx, cy, angle in spec.ellipses:
        perturbed.append((
            intensity * rng.uniform(0.85, 1.15),
            min(a * rng.uniform(0.85, 1.15), 0.95),
            min(b * rng.uniform(0.85, 1.15), 0.95),
            np.clip(cx + rng.uniform(-0.04, 0.04), -0.85, 0.85),
            np.clip(cy + rng.uniform(-0.04, 0.04), -0.85, 0.85),
            angle + rng.uniform(-np.deg2rad(10.0), np.deg2rad(10.0)),
        ))
    return render_phantom(PhantomSpec(size=spec.size, ellipses=tuple(perturbed)))


def make_condition_pair(x, seed):
    """Build a companion image: seeded intensity remap plus a mild smooth warp.

    The output stays in [0, 1], zeros stay zero under the remap, and the pair
    remains clearly related (similar structure) without being identical.
    """
    x = as_float_array(x, "x")
    if x.ndim != 2:
        raise ParameterError(f"expected a 2-D image, got {x.ndim}-D")
    rng = np.random.default_rng(seed)
    n_rows, n_cols = x.shape

    gamma = rng.uniform(0.6, 1.5)
    amp = rng.uniform(1.0, 2.0)
    rows = np.arange(n_rows)[:, np.newaxis] / max(n_rows - 1, 1)
    cols = np.arange(n_cols)[np.newaxis, :] / max(n_cols - 1, 1)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=4)
    d_row = amp * np.sin(2.0 * np.pi * rows + phase[0]) * np.cos(2.0 * np.pi * cols + phase[1])
    d_col = amp * np.cos(2.0 * np.pi * rows + phase[2]) * np.sin(2.0 * np.pi * cols + phase[3])

    grid_r = np.broadcast_to(np.arange(n_rows)[:, np.newaxis], x.shape) + d_row
    grid_c = np.broadcast_to(np.arange(n_cols)[np.newaxis, :], x.shape) + d_col
    warped = ndimage.map_coordinates(x, [grid_r, grid_c], order=1, mode="nearest")
    return np.clip(np.clip(warped, 0.0, None) ** gamma, 0.0, 1.0)
