"""Linear measurement operators: dense matrices and a parallel-beam Radon
transform, with adjoints and minimum-norm pseudo-inverse application."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, ParameterError, ShapeError
from .validation import as_float_array, check_positive, check_shape

__all__ = [
    "Image",
    "Sinogram",
    "MeasurementOperator",
    "DenseOperator",
    "DiagonalOperator",
    "IdentityOperator",
    "RadonOperator",
    "fbp_reconstruct",
]

VALUE_RANGES = {"unit": (0.0, 1.0), "signed": (-1.0, 1.0)}


@dataclass
class Image:
    """2-D scalar field in the image domain, row-major (height, width)."""

    pixels: np.ndarray
    value_range: str = "unit"

    def __post_init__(self):
        self.pixels = as_float_array(self.pixels, "pixels")
        if self.pixels.ndim != 2:
            raise ShapeError(f"pixels must be 2-D, got shape {self.pixels.shape}")
        if self.value_range not in VALUE_RANGES:
            raise ParameterError(f"unknown value_range {self.value_range!r}")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass
class Sinogram:
    """Projection stack, angle-major (n_angles, n_detectors)."""

    values: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        self.values = as_float_array(self.values, "values")
        self.angles = as_float_array(self.angles, "angles")
        if self.values.ndim != 2:
            raise ShapeError(f"values must be 2-D, got shape {self.values.shape}")
        if self.angles.shape != (self.values.shape[0],):
            raise ShapeError(
                f"got {self.angles.size} angles for {self.values.shape[0]} projection rows"
            )
        if self.angles.size and (
            np.any(np.diff(self.angles) <= 0)
            or self.angles[0] < 0
            or self.angles[-1] >= np.pi
        ):
            raise ParameterError("angles must be strictly increasing within [0, pi)")

    @property
    def n_angles(self):
        return self.values.shape[0]

    @property
    def n_detectors(self):
        return self.values.shape[1]


class MeasurementOperator(ABC):
    """Linear map between two fixed array shapes.

    Subclasses provide apply/adjoint/pinv_apply; range and null projections
    derive from those.  Operators are immutable after construction and safe
    to share across threads.
    """

    input_shape: tuple
    output_shape: tuple

    @abstractmethod
    def apply(self, x) -> np.ndarray:
        """A x"""

    @abstractmethod
    def adjoint(self, y) -> np.ndarray:
        """A^T y"""

    @abstractmethod
    def pinv_apply(self, y, tol=1e-6, max_iter=500) -> np.ndarray:
        """Minimum-norm least-squares solution of A x = y."""

    def range_project(self, x, tol=1e-6, max_iter=500) -> np.ndarray:
        """A+ A x, the measurement-determined part of x."""
        return self.pinv_apply(self.apply(x), tol=tol, max_iter=max_iter)

    def null_project(self, x, tol=1e-6, max_iter=500) -> np.ndarray:
        """(I - A+ A) x, the part of x invisible to the measurements."""
        x = as_float_array(x, "x")
        return x - self.range_project(x, tol=tol, max_iter=max_iter)

    def _check_input(self, x):
        x = as_float_array(x, "x")
        check_shape(x, self.input_shape, "x")
        return x

    def _check_output(self, y):
        y = as_float_array(y, "y")
        check_shape(y, self.output_shape, "y")
        return y


class DenseOperator(MeasurementOperator):
    """Explicit matrix operator on flat vectors; pseudo-inverse via SVD."""

    # singular values below this fraction of the largest are treated as zero
    SVD_CUTOFF = 1e-10

    def __init__(self, matrix):
        matrix = np.array(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ShapeError(f"matrix must be 2-D, got shape {matrix.shape}")
        self.matrix = matrix
        self.matrix.flags.writeable = False
        self.output_shape = (matrix.shape[0],)
        self.input_shape = (matrix.shape[1],)

    @cached_property
    def _svd(self):
        return np.linalg.svd(self.matrix, full_matrices=False)

    def apply(self, x):
        return self.matrix @ self._check_input(x)

    def adjoint(self, y):
        return self.matrix.T @ self._check_output(y)

    def pinv_apply(self, y, tol=1e-6, max_iter=500):
        # exact truncated-SVD solve; tol/max_iter are accepted for interface
        # compatibility and ignored
        y = self._check_output(y)
        u, s, vt = self._svd
        keep = s > self.SVD_CUTOFF * (s[0] if s.size else 0.0)
        if not np.any(keep):
            return np.zeros(self.input_shape)
        coeffs = (u[:, keep].T @ y) / s[keep]
        return vt[keep].T @ coeffs


class DiagonalOperator(MeasurementOperator):
    """Elementwise multiplication by a fixed array (same input/output shape)."""

    def __init__(self, diag):
        self.diag = np.array(diag, dtype=np.float64)
        self.diag.flags.writeable = False
        self.input_shape = self.diag.shape
        self.output_shape = self.diag.shape

    @cached_property
    def _pinv_diag(self):
        inv = np.zeros_like(self.diag)
        nz = self.diag != 0
        inv[nz] = 1.0 / self.diag[nz]
        inv.flags.writeable = False
        return inv

    def apply(self, x):
        return self._check_input(x) * self.diag

    def adjoint(self, y):
        return self._check_output(y) * self.diag

    def pinv_apply(self, y, tol=1e-6, max_iter=500):
        return self._check_output(y) * self._pinv_diag


class IdentityOperator(DiagonalOperator):
    """Identity map; apply, adjoint and pinv_apply all return a copy of x."""

    def __init__(self, shape):
        super().__init__(np.ones(shape))

    def apply(self, x):
        return self._check_input(x).copy()

    adjoint = apply

    def pinv_apply(self, y, tol=1e-6, max_iter=500):
        return self._check_output(y).copy()


def _cgls(matvec, rmatvec, b, x_size, tol, max_iter):
    """Conjugate gradient on the normal equations, started from zero.

    The zero start keeps every iterate in range(A^T), so the limit is the
    minimum-norm least-squares solution.  Stops when either the data
    residual ||b - A x|| drops below tol * ||b|| or, for inconsistent
    systems, the normal residual ||A^T r|| drops below tol * ||A^T b||.
    """
    b = b.ravel()
    x = np.zeros(x_size)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return x, 0
    r = b.copy()
    s = rmatvec(r)
    norm_s0 = np.linalg.norm(s)
    if norm_s0 == 0.0:
        # b is entirely outside the range; the least-squares solution is 0
        return x, 0
    p = s.copy()
    gamma = float(s @ s)
    for iteration in range(1, max_iter + 1):
        q = matvec(p)
        qq = float(q @ q)
        if qq == 0.0:
            break
        alpha = gamma / qq
        x += alpha * p
        r -= alpha * q
        if np.linalg.norm(r) <= tol * norm_b:
            return x, iteration
        s = rmatvec(r)
        gamma_new = float(s @ s)
        if np.sqrt(gamma_new) <= tol * norm_s0:
            return x, iteration
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    raise ConvergenceError(
        f"least-squares solver did not reach tol={tol} within {max_iter} iterations "
        f"(relative residual {np.linalg.norm(r) / norm_b:.3e})",
        residual=float(np.linalg.norm(r) / norm_b),
        iterations=max_iter,
    )


class RadonOperator(MeasurementOperator):
    """Discrete parallel-beam Radon transform on an n x n image.

    Each projection row integrates the bilinearly interpolated image along
    equispaced sample points (spacing 1 pixel) on rays perpendicular to the
    detector axis; detectors span the image diagonal.  The full map is
    materialized once as a sparse matrix, so the adjoint is the exact
    transpose and results are bit-reproducible.
    """

    def __init__(self, image_size, n_angles, n_detectors=None):
        if image_size < 2:
            raise ParameterError(f"image_size must be >= 2, got {image_size!r}")
        if n_angles < 1:
            raise ParameterError(f"n_angles must be >= 1, got {n_angles!r}")
        n = int(image_size)
        n_det = n if n_detectors is None else int(n_detectors)
        if n_det < 1:
            raise ParameterError(f"n_detectors must be >= 1, got {n_detectors!r}")
        self.image_size = n
        self.n_angles = int(n_angles)
        self.n_detectors = n_det
        self.angles = np.pi * np.arange(self.n_angles) / self.n_angles
        self.angles.flags.writeable = False
        diagonal = np.sqrt(2.0) * n
        self.detector_spacing = diagonal / n_det
        self.input_shape = (n, n)
        self.output_shape = (self.n_angles, n_det)
        self._matrix = self._build_matrix()
        self._matrix_t = self._matrix.T.tocsr()

    def _build_matrix(self):
        n = self.image_size
        n_det = self.n_detectors
        center = (n - 1) / 2.0
        det_pos = (np.arange(n_det) - (n_det - 1) / 2.0) * self.detector_spacing
        n_samples = int(np.ceil(np.sqrt(2.0) * n)) + 1
        sample_pos = np.arange(n_samples) - (n_samples - 1) / 2.0

        rows, cols, vals = [], [], []
        for k, theta in enumerate(self.angles):
            ux, uy = np.cos(theta), np.sin(theta)
            # ray direction, perpendicular to the detector axis
            vx, vy = -uy, ux
            px = center + det_pos[:, None] * ux + sample_pos[None, :] * vx
            py = center + det_pos[:, None] * uy + sample_pos[None, :] * vy
            det_idx = np.broadcast_to(np.arange(n_det)[:, None], px.shape)

            ix = np.floor(px).astype(np.int64)
            iy = np.floor(py).astype(np.int64)
            fx = px - ix
            fy = py - iy
            for dx, dy, w in (
                (0, 0, (1 - fx) * (1 - fy)),
                (1, 0, fx * (1 - fy)),
                (0, 1, (1 - fx) * fy),
                (1, 1, fx * fy),
            ):
                gx = ix + dx
                gy = iy + dy
                ok = (gx >= 0) & (gx < n) & (gy >= 0) & (gy < n) & (w > 0)
                rows.append(k * n_det + det_idx[ok])
                cols.append(gy[ok] * n + gx[ok])
                vals.append(w[ok])

        m = self.n_angles * n_det
        matrix = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m, n * n),
        )
        return matrix.tocsr()

    def as_matrix(self):
        """Dense copy of the underlying matrix (small geometries only)."""
        return self._matrix.toarray()

    def apply(self, x):
        x = self._check_input(x)
        return (self._matrix @ x.ravel()).reshape(self.output_shape)

    def adjoint(self, y):
        y = self._check_output(y)
        return (self._matrix_t @ y.ravel()).reshape(self.input_shape)

    def pinv_apply(self, y, tol=1e-6, max_iter=500):
        y = self._check_output(y)
        check_positive(tol, "tol")
        x, _ = _cgls(
            lambda v: self._matrix @ v,
            lambda w: self._matrix_t @ w,
            y,
            self.image_size**2,
            tol,
            max_iter,
        )
        return x.reshape(self.input_shape)

    def sinogram(self, values) -> Sinogram:
        """Wrap raw projection values with this operator's angle grid."""
        return Sinogram(values=values, angles=self.angles.copy())


def _ramp_filter_rows(values, spacing):
    """Ram-Lak filtering of each projection row in the frequency domain."""
    n_det = values.shape[1]
    size = 1 << max(6, int(np.ceil(np.log2(2 * n_det))))
    freqs = np.fft.fftfreq(size, d=spacing)
    spectrum = np.fft.fft(values, n=size, axis=1) * (2.0 * np.abs(freqs))[None, :]
    return np.real(np.fft.ifft(spectrum, axis=1))[:, :n_det]


def fbp_reconstruct(op: RadonOperator, y, filter="ram-lak", clamp=True):
    """Filtered backprojection baseline.

    filter "ram-lak" applies the standard ramp in the detector frequency
    domain; "none" is plain scaled backprojection.  The output is clamped
    to [0, 1] unless clamp is False.
    """
    if isinstance(y, Sinogram):
        y = y.values
    y = as_float_array(y, "y")
    check_shape(y, op.output_shape, "y")
    if filter == "ram-lak":
        y = _ramp_filter_rows(y, op.detector_spacing)
    elif filter != "none":
        raise ParameterError(f"unknown filter {filter!r}")
    # adjoint approximates (1/detector_spacing) x continuous backprojection;
    # the angle sum approximates (n_angles/pi) x the angle integral; the
    # extra 1/2 pairs with the 2|f| ramp convention
    recon = op.adjoint(y) * (np.pi / (2.0 * op.n_angles)) * op.detector_spacing
    if clamp:
        recon = np.clip(recon, 0.0, 1.0)
    return recon
