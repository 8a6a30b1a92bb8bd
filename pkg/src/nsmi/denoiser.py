"""Noise-prediction interfaces: the closed-form Gaussian-prior denoiser used
as a test oracle, and the client-backed external denoiser."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .validation import as_float_array, check_t

__all__ = [
    "Denoiser",
    "GaussianPrior",
    "GaussianDenoiser",
    "ExternalDenoiser",
    "gaussian_posterior_mean",
    "gaussian_predict_eps",
    "external_predict_eps",
]


class Denoiser(ABC):
    """eps-prediction interface; implementations must be deterministic."""

    @abstractmethod
    def predict_eps(self, x_t, t, condition=None) -> np.ndarray:
        """Estimate the noise component of x_t at timestep t."""


@dataclass(frozen=True)
class GaussianPrior:
    """Independent per-pixel Gaussian prior N(mean, var)."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "var", np.asarray(self.var, dtype=np.float64))
        try:
            np.broadcast_shapes(self.mean.shape, self.var.shape)
        except ValueError as exc:
            raise ShapeError(f"mean and var do not broadcast: {exc}") from exc
        if not np.all(self.var > 0):
            raise ParameterError("prior variance must be strictly positive")


def gaussian_posterior_mean(prior, schedule, x_t, t):
    """E[x0 | x_t] under the Gaussian prior at timestep t."""
    t = check_t(t, schedule.T)
    x_t = as_float_array(x_t, "x_t")
    ab = schedule.alpha_bar[t]
    num = np.sqrt(ab) * prior.var * x_t + (1.0 - ab) * prior.mean
    den = ab * prior.var + (1.0 - ab)
    return num / den


def gaussian_predict_eps(prior, schedule, x_t, t):
    """Exact MMSE noise estimate implied by the Gaussian posterior mean."""
    t = check_t(t, schedule.T)
    x_t = as_float_array(x_t, "x_t")
    ab = schedule.alpha_bar[t]
    mean = gaussian_posterior_mean(prior, schedule, x_t, t)
    return (x_t - np.sqrt(ab) * mean) / np.sqrt(1.0 - ab)


class GaussianDenoiser(Denoiser):
    """Denoiser wrapper around gaussian_predict_eps; ignores the condition."""

    def __init__(self, prior: GaussianPrior, schedule):
        self.prior = prior
        self.schedule = schedule

    def predict_eps(self, x_t, t, condition=None):
        return gaussian_predict_eps(self.prior, self.schedule, x_t, t)


def external_predict_eps(client, x_t, t, condition=None):
    """Fetch eps from a wire-protocol endpoint, bit-faithful to the payload."""
    eps = client.predict_eps(x_t, t, condition)
    return np.asarray(eps, dtype=np.float64)


class ExternalDenoiser(Denoiser):
    """Denoiser backed by a protocol client (one request per step)."""

    def __init__(self, client):
        self.client = client

    def predict_eps(self, x_t, t, condition=None):
        return external_predict_eps(self.client, x_t, t, condition)
