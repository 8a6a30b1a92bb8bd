"""Diffusion noise schedules and elementary forward/reverse steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .validation import as_float_array, check_same_shape, check_t

__all__ = [
    "NoiseSchedule",
    "TimestepSubsequence",
    "build_linear_schedule",
    "ddim_timesteps",
    "forward_diffuse",
    "predict_x0_from_eps",
    "ddpm_step",
    "ddim_step",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule for a T-step diffusion.

    Arrays have length T + 1 and are indexed directly by timestep, so
    ``beta[t]`` belongs to step t for t in 1..T.  Index 0 stores the boundary
    conventions alpha_bar[0] = 1 and posterior_var[0] = 0 (beta[0] and
    alpha[0] are padding).  Under those conventions posterior_var[1] = 0, so
    the final reverse step is deterministic.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray

    def sigma(self, t) -> float:
        """Std of the stochastic part of the reverse step at t."""
        t = check_t(t, self.T)
        return float(np.sqrt(self.posterior_var[t]))


@dataclass(frozen=True)
class TimestepSubsequence:
    """Strictly increasing timesteps used for accelerated sampling."""

    steps: tuple

    def __post_init__(self):
        steps = tuple(int(s) for s in self.steps)
        if not steps:
            raise ParameterError("timestep subsequence must be nonempty")
        if steps[0] < 1:
            raise ParameterError(f"timesteps must be >= 1, got {steps[0]}")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ParameterError("timesteps must be strictly increasing")
        object.__setattr__(self, "steps", steps)

    def __len__(self):
        return len(self.steps)


def build_linear_schedule(T, beta_start=1e-4, beta_end=0.02) -> NoiseSchedule:
    """Linearly interpolated beta schedule, endpoints inclusive."""
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ParameterError(f"T must be an integer >= 2, got {T!r}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start!r}, {beta_end!r})"
        )
    T = int(T)
    beta = np.zeros(T + 1)
    beta[1:] = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)  # alpha[0] = 1, so alpha_bar[0] = 1 exactly
    posterior_var = np.zeros(T + 1)
    posterior_var[1:] = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:]
    for arr in (beta, alpha, alpha_bar, posterior_var):
        arr.flags.writeable = False
    return NoiseSchedule(
        T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar, posterior_var=posterior_var
    )


def ddim_timesteps(T, n_steps) -> TimestepSubsequence:
    """Uniform-stride subsequence of {1..T} whose last element is T."""
    if not isinstance(n_steps, (int, np.integer)) or not 1 <= n_steps <= T:
        raise ParameterError(f"n_steps must be in [1, {T}], got {n_steps!r}")
    stride = T // int(n_steps)
    steps = tuple(T - stride * k for k in range(int(n_steps) - 1, -1, -1))
    return TimestepSubsequence(steps=steps)


def forward_diffuse(schedule, x0, t, eps):
    """Noised sample sqrt(abar_t)*x0 + sqrt(1 - abar_t)*eps."""
    t = check_t(t, schedule.T)
    x0 = as_float_array(x0, "x0")
    eps = as_float_array(eps, "eps")
    check_same_shape(x0, eps, "x0", "eps")
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def predict_x0_from_eps(schedule, x_t, t, eps_hat):
    """One-step clean estimate (x_t - sqrt(1 - abar_t)*eps_hat) / sqrt(abar_t)."""
    t = check_t(t, schedule.T)
    x_t = as_float_array(x_t, "x_t")
    eps_hat = as_float_array(eps_hat, "eps_hat")
    check_same_shape(x_t, eps_hat, "x_t", "eps_hat")
    ab = schedule.alpha_bar[t]
    return (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def ddpm_step(schedule, x_t, x0_hat, t, noise):
    """Ancestral reverse step from t to t-1.

    Returns the posterior mean in x0_hat/x_t parameterization plus
    sigma_t * noise.  The caller supplies the noise draw so runs stay
    deterministic under a seeded generator.
    """
    t = check_t(t, schedule.T)
    x_t = as_float_array(x_t, "x_t")
    x0_hat = as_float_array(x0_hat, "x0_hat")
    noise = as_float_array(noise, "noise")
    check_same_shape(x_t, x0_hat, "x_t", "x0_hat")
    check_same_shape(x_t, noise, "x_t", "noise")
    if t == 1:
        # alpha_bar[0] = 1 makes the x0_hat coefficient 1 and the x_t
        # coefficient 0, and sigma_1 = 0; return exactly x0_hat instead of
        # paying the ~1 ulp rounding of evaluating the general formula.
        return x0_hat.copy()
    ab_t = schedule.alpha_bar[t]
    ab_prev = schedule.alpha_bar[t - 1]
    coef_x0 = np.sqrt(ab_prev) * schedule.beta[t] / (1.0 - ab_t)
    coef_xt = np.sqrt(schedule.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab_t)
    return coef_x0 * x0_hat + coef_xt * x_t + schedule.sigma(t) * noise


def ddim_step(schedule, subsequence, x_t, x0_hat, eps_hat, step_index, eta, noise):
    """Reverse step from subsequence[step_index] to its predecessor.

    The predecessor of the first element is 0 (alpha_bar[0] = 1), so the
    first step lands exactly on x0_hat.  eta = 0 is fully deterministic;
    eta = 1 on the full sequence reproduces the ddpm_step noise level.
    """
    steps = subsequence.steps
    if not isinstance(step_index, (int, np.integer)) or not 0 <= step_index < len(steps):
        raise ParameterError(
            f"step_index must be in [0, {len(steps) - 1}], got {step_index!r}"
        )
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"eta must be in [0, 1], got {eta!r}")
    t = check_t(steps[step_index], schedule.T)
    t_prev = steps[step_index - 1] if step_index > 0 else 0
    x_t = as_float_array(x_t, "x_t")
    x0_hat = as_float_array(x0_hat, "x0_hat")
    eps_hat = as_float_array(eps_hat, "eps_hat")
    noise = as_float_array(noise, "noise")
    for other, name in ((x0_hat, "x0_hat"), (eps_hat, "eps_hat"), (noise, "noise")):
        check_same_shape(x_t, other, "x_t", name)
    ab_t = schedule.alpha_bar[t]
    ab_prev = schedule.alpha_bar[t_prev]
    sigma = eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * np.sqrt(1.0 - ab_t / ab_prev)
    dir_coef = np.sqrt(max(1.0 - ab_prev - sigma * sigma, 0.0))
    return np.sqrt(ab_prev) * x0_hat + dir_coef * eps_hat + sigma * noise
