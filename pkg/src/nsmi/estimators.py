"""scikit-learn style wrappers around the reconstruction routines.

Each estimator takes sinogram stacks shaped (n_samples, n_angles,
n_detectors), or the same rows flattened to 2-D, and returns image stacks
shaped (n_samples, size, size). Constructor arguments are stored verbatim
so get_params/set_params/clone behave as usual; geometry and priors are
built in fit and stored in trailing-underscore attributes.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .denoiser import GaussianDenoiser, GaussianPrior
from .errors import ShapeError
from .operators import RadonOperator, fbp_reconstruct
from .sampler import SamplerConfig, reverse_sample
from .schedule import build_linear_schedule
from .validation import as_float_array

__all__ = ["FBPReconstructor", "PinvReconstructor", "DiffusionReconstructor"]


def _as_stack(X, row_shape, name):
    """Coerce (n, *row_shape) or (n, prod(row_shape)) input to a 3-D stack."""
    X = as_float_array(X, name)
    flat = int(np.prod(row_shape))
    if X.ndim == 2 and X.shape[1] == flat:
        return X.reshape((X.shape[0],) + row_shape)
    if X.ndim == 3 and X.shape[1:] == row_shape:
        return X
    raise ShapeError(
        f"{name} must be (n_samples, {row_shape[0]}, {row_shape[1]}) or "
        f"(n_samples, {flat}), got {X.shape}"
    )


class FBPReconstructor(BaseEstimator, TransformerMixin):
    """Filtered backprojection over a fixed acquisition geometry."""

    def __init__(self, image_size=64, n_angles=23, n_detectors=None,
                 filter="ram-lak", clamp=True):
        self.image_size = image_size
        self.n_angles = n_angles
        self.n_detectors = n_detectors
        self.filter = filter
        self.clamp = clamp

    def fit(self, X=None, y=None):
        self.op_ = RadonOperator(self.image_size, self.n_angles, self.n_detectors)
        return self

    def transform(self, X):
        check_is_fitted(self, "op_")
        stack = _as_stack(X, self.op_.output_shape, "X")
        return np.stack([
            fbp_reconstruct(self.op_, row, filter=self.filter, clamp=self.clamp)
            for row in stack
        ])

    def predict(self, X):
        return self.transform(X)


class PinvReconstructor(BaseEstimator, TransformerMixin):
    """Minimum-norm least-squares reconstruction via the operator pseudo-inverse."""

    def __init__(self, image_size=64, n_angles=23, n_detectors=None,
                 tol=1e-6, max_iter=2000, clamp=True):
        self.image_size = image_size
        self.n_angles = n_angles
        self.n_detectors = n_detectors
        self.tol = tol
        self.max_iter = max_iter
        self.clamp = clamp

    def fit(self, X=None, y=None):
        self.op_ = RadonOperator(self.image_size, self.n_angles, self.n_detectors)
        return self

    def transform(self, X):
        check_is_fitted(self, "op_")
        stack = _as_stack(X, self.op_.output_shape, "X")
        out = np.stack([
            self.op_.pinv_apply(row, tol=self.tol, max_iter=self.max_iter)
            for row in stack
        ])
        return np.clip(out, 0.0, 1.0) if self.clamp else out

    def predict(self, X):
        return self.transform(X)


class DiffusionReconstructor(BaseEstimator, TransformerMixin):
    """Measurement-refined reverse diffusion with a prior learned in fit.

    fit consumes a stack of clean images and keeps a per-pixel Gaussian
    prior (mean field, variance field floored at prior_floor). transform
    then samples one reconstruction per input sinogram; sample i uses
    seed + i, so repeated calls are deterministic.
    """

    def __init__(self, image_size=64, n_angles=23, n_detectors=None,
                 T=200, beta_start=1e-4, beta_end=0.02,
                 mode="noiseless", stepper="ddpm", ddim_steps=100, eta=0.0,
                 sigma_n=0.0, seed=0, solver_tol=1e-6, solver_max_iter=2000,
                 prior_floor=1e-4):
        self.image_size = image_size
        self.n_angles = n_angles
        self.n_detectors = n_detectors
        self.T = T
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.mode = mode
        self.stepper = stepper
        self.ddim_steps = ddim_steps
        self.eta = eta
        self.sigma_n = sigma_n
        self.seed = seed
        self.solver_tol = solver_tol
        self.solver_max_iter = solver_max_iter
        self.prior_floor = prior_floor

    def fit(self, X, y=None):
        shape = (self.image_size, self.image_size)
        images = _as_stack(X, shape, "X")
        self.op_ = RadonOperator(self.image_size, self.n_angles, self.n_detectors)
        self.schedule_ = build_linear_schedule(self.T, self.beta_start, self.beta_end)
        mean = images.mean(axis=0)
        var = np.maximum(images.var(axis=0), self.prior_floor)
        self.prior_ = GaussianPrior(mean, var)
        self.denoiser_ = GaussianDenoiser(self.prior_, self.schedule_)
        return self

    def _config(self, sample_index):
        return SamplerConfig(
            mode=self.mode, stepper=self.stepper, ddim_steps=self.ddim_steps,
            eta=self.eta, sigma_n=self.sigma_n, seed=self.seed + sample_index,
            solver_tol=self.solver_tol, solver_max_iter=self.solver_max_iter,
            clamp=(0.0, 1.0), record_trace=False,
        )

    def transform(self, X):
        check_is_fitted(self, "op_")
        stack = _as_stack(X, self.op_.output_shape, "X")
        recons = []
        for i, row in enumerate(stack):
            image, _ = reverse_sample(
                self.schedule_, self.op_, row, self.denoiser_, self._config(i))
            recons.append(image)
        return np.stack(recons)

    def predict(self, X):
        return self.transform(X)
