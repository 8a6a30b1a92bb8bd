"""Measurement-guided diffusion sampling for sparse-view tomography."""

from .denoiser import (
    Denoiser,
    ExternalDenoiser,
    GaussianDenoiser,
    GaussianPrior,
    gaussian_posterior_mean,
    gaussian_predict_eps,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DenoiserError,
    FileFormatError,
    NsmiError,
    ParameterError,
    ShapeError,
)
from .estimators import DiffusionReconstructor, FBPReconstructor, PinvReconstructor
from .io import load_array, load_image, load_sinogram, save_array, save_image, save_sinogram
from .metrics import psnr, ssim
from .operators import (
    DenseOperator,
    DiagonalOperator,
    IdentityOperator,
    Image,
    MeasurementOperator,
    RadonOperator,
    Sinogram,
    fbp_reconstruct,
)
from .phantoms import PhantomSpec, make_condition_pair, random_phantom, render_phantom, shepp_logan
from .refinement import NoisyNsmiParams, compute_gamma_phi, refine_noiseless, refine_noisy, step_noisy
from .sampler import (
    SampleTrace,
    SamplerConfig,
    format_metrics_table,
    reverse_sample,
    run_repeated,
)
from .schedule import (
    NoiseSchedule,
    TimestepSubsequence,
    build_linear_schedule,
    ddim_step,
    ddim_timesteps,
    ddpm_step,
    forward_diffuse,
    predict_x0_from_eps,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "Denoiser",
    "DenoiserError",
    "DenseOperator",
    "DiagonalOperator",
    "DiffusionReconstructor",
    "ExternalDenoiser",
    "FBPReconstructor",
    "FileFormatError",
    "GaussianDenoiser",
    "GaussianPrior",
    "IdentityOperator",
    "Image",
    "MeasurementOperator",
    "NoiseSchedule",
    "NoisyNsmiParams",
    "NsmiError",
    "ParameterError",
    "PhantomSpec",
    "PinvReconstructor",
    "RadonOperator",
    "SampleTrace",
    "SamplerConfig",
    "ShapeError",
    "Sinogram",
    "TimestepSubsequence",
    "build_linear_schedule",
    "compute_gamma_phi",
    "ddim_step",
    "ddim_timesteps",
    "ddpm_step",
    "fbp_reconstruct",
    "format_metrics_table",
    "forward_diffuse",
    "gaussian_posterior_mean",
    "gaussian_predict_eps",
    "load_array",
    "load_image",
    "load_sinogram",
    "make_condition_pair",
    "predict_x0_from_eps",
    "psnr",
    "random_phantom",
    "refine_noiseless",
    "refine_noisy",
    "render_phantom",
    "reverse_sample",
    "run_repeated",
    "save_array",
    "save_image",
    "save_sinogram",
    "shepp_logan",
    "ssim",
    "step_noisy",
    "__version__",
]
