"""Measurement refinement of one-step denoised estimates.

The noiseless variant overwrites the measurement-determined (range-space)
part of the estimate with content solved from the observations; the noisy
variant damps that correction by a per-step factor gamma_t and rebalances
the reverse-step noise so its total variance stays at sigma_t^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .validation import as_float_array, check_positive, check_t

__all__ = [
    "NoisyNsmiParams",
    "refine_noiseless",
    "compute_gamma_phi",
    "refine_noisy",
    "step_noisy",
]


@dataclass(frozen=True)
class NoisyNsmiParams:
    """Per-step correction scale gamma_t and extra-noise variance phi_t.

    Arrays are indexed by timestep like NoiseSchedule (length T + 1, slot 0
    padding).  For every t, (eps_measure std)^2 + phi_t = sigma_t^2, where
    eps_measure std = gamma_t * sqrt(alpha_bar[t-1]) * beta_t * sigma_n
    / (1 - alpha_bar[t]).  gamma_t = 1 wherever sigma_t is large enough to
    absorb the full measurement noise; at t = 1, sigma_1 = 0 forces
    gamma_1 = 0 whenever sigma_n > 0.
    """

    sigma_n: float
    gamma: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=np.float64))
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=np.float64))
        if self.gamma.shape != self.phi.shape or self.gamma.ndim != 1:
            raise ShapeError("gamma and phi must be 1-D arrays of equal length")
        if np.any(self.gamma < 0) or np.any(self.gamma > 1) or np.any(self.phi < 0):
            raise ParameterError("need 0 <= gamma <= 1 and phi >= 0")

    @property
    def T(self):
        return self.gamma.size - 1


def compute_gamma_phi(schedule, sigma_n) -> NoisyNsmiParams:
    """Derive (gamma_t, phi_t) from the schedule and the noise level.

    gamma_t = 1 when sigma_t >= sqrt(alpha_bar[t-1]) * beta_t * sigma_n
    / (1 - alpha_bar[t]), else the ratio of the two sides; phi_t is whatever
    variance remains after the measurement-noise share, exactly zero in the
    damped branch.
    """
    sigma_n = check_positive(sigma_n, "sigma_n", allow_zero=True)
    T = schedule.T
    ts = np.arange(1, T + 1)
    var = schedule.posterior_var[ts]
    m_raw = (
        np.sqrt(schedule.alpha_bar[ts - 1])
        * schedule.beta[ts]
        * sigma_n
        / (1.0 - schedule.alpha_bar[ts])
    )
    # compare variances so sigma_n = 0 keeps phi = posterior_var bit-exactly
    damped = var < m_raw**2
    gamma = np.ones(T + 1)
    np.divide(np.sqrt(var), m_raw, out=gamma[1:], where=damped)
    phi = np.zeros(T + 1)
    phi[1:] = np.where(
        damped, 0.0, np.maximum(var - (gamma[1:] * m_raw) ** 2, 0.0)
    )
    for arr in (gamma, phi):
        arr.flags.writeable = False
    return NoisyNsmiParams(sigma_n=sigma_n, gamma=gamma, phi=phi)


def refine_noiseless(op, x0t, y, tol=1e-6, max_iter=500):
    """x0t - pinv(A x0t - y): overwrite the range-space part from data."""
    x0t = as_float_array(x0t, "x0t")
    y = as_float_array(y, "y")
    residual = op.apply(x0t) - y
    return x0t - op.pinv_apply(residual, tol=tol, max_iter=max_iter)


def refine_noisy(op, x0t, y, params, t, tol=1e-6, max_iter=500):
    """Range-space correction damped by gamma_t; gamma_t = 1 reduces to the
    noiseless refinement."""
    t = check_t(t, params.T)
    x0t = as_float_array(x0t, "x0t")
    y = as_float_array(y, "y")
    residual = op.apply(x0t) - y
    return x0t - params.gamma[t] * op.pinv_apply(residual, tol=tol, max_iter=max_iter)


def _measure_std(schedule, params, t):
    return (
        params.gamma[t]
        * np.sqrt(schedule.alpha_bar[t - 1])
        * schedule.beta[t]
        * params.sigma_n
        / (1.0 - schedule.alpha_bar[t])
    )


def step_noisy(schedule, params, x_t, x0t_refined, t, rng):
    """Reverse step for the noisy refinement.

    Deterministic part matches ddpm_step; the sigma_t noise is split into a
    measurement share (std gamma_t sqrt(alpha_bar[t-1]) beta_t sigma_n
    / (1 - alpha_bar[t])) and an extra share (variance phi_t).  Draw order
    is fixed (measurement first, then extra) and zero-variance components
    draw nothing, so sigma_n = 0 consumes the generator exactly like a
    plain ddpm step.
    """
    t = check_t(t, schedule.T)
    if params.T != schedule.T:
        raise ShapeError(
            f"params built for T={params.T} but schedule has T={schedule.T}"
        )
    x_t = as_float_array(x_t, "x_t")
    x0t_refined = as_float_array(x0t_refined, "x0t_refined")
    if x_t.shape != x0t_refined.shape:
        raise ShapeError("x_t and x0t_refined must have the same shape")
    if t == 1:
        # same exact collapse as ddpm_step: alpha_bar[0] = 1 and sigma_1 = 0
        return x0t_refined.copy()
    ab_t = schedule.alpha_bar[t]
    ab_prev = schedule.alpha_bar[t - 1]
    coef_x0 = np.sqrt(ab_prev) * schedule.beta[t] / (1.0 - ab_t)
    coef_xt = np.sqrt(schedule.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab_t)
    out = coef_x0 * x0t_refined + coef_xt * x_t
    m_std = _measure_std(schedule, params, t)
    if m_std > 0.0:
        out += m_std * rng.standard_normal(x_t.shape)
    phi = params.phi[t]
    if phi > 0.0:
        out += np.sqrt(phi) * rng.standard_normal(x_t.shape)
    return out
