"""Reverse diffusion sampling with per-step measurement refinement.

Each step denoises the current state, forms a clean-image estimate, pulls
that estimate toward the measurement via the operator pseudo-inverse, and
then applies the usual reverse transition. The RNG draw order is fixed:
the initial state first, then one Gaussian draw per step (none on the final
step, where the transition is deterministic), so runs with the same seed
are bit-identical.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ConvergenceError, ParameterError
from .metrics import psnr, ssim
from .refinement import compute_gamma_phi, refine_noiseless, refine_noisy, step_noisy
from .schedule import ddim_step, ddim_timesteps, ddpm_step, predict_x0_from_eps
from .validation import as_float_array, check_shape

__all__ = ["SamplerConfig", "SampleTrace", "reverse_sample", "run_repeated", "format_metrics_table"]

MODES = ("noiseless", "noisy")
STEPPERS = ("ddpm", "ddim")


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling options.

    mode: "noiseless" trusts the measurement exactly; "noisy" damps the
        correction and requires sigma_n > 0 (the measurement noise level
        mapped into image units). The noisy update is tied to the full
        reverse chain, so mode="noisy" only works with stepper="ddpm".
    stepper: "ddpm" walks every timestep; "ddim" visits an evenly strided
        subsequence of ddim_steps timesteps with stochasticity eta in [0, 1].
    clamp: optional (lo, hi) applied to the final output only.
    solver_tol / solver_max_iter are passed to the operator pseudo-inverse.
    """

    mode: str = "noiseless"
    stepper: str = "ddpm"
    ddim_steps: int = 100
    eta: float = 0.0
    sigma_n: float = 0.0
    seed: int = 0
    solver_tol: float = 1e-6
    solver_max_iter: int = 2000
    clamp: tuple = None
    record_trace: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.stepper not in STEPPERS:
            raise ConfigError(f"stepper must be one of {STEPPERS}, got {self.stepper!r}")
        if self.mode == "noisy":
            if self.stepper != "ddpm":
                raise ConfigError("mode='noisy' requires stepper='ddpm'")
            if not self.sigma_n > 0:
                raise ConfigError(f"mode='noisy' requires sigma_n > 0, got {self.sigma_n!r}")
        elif self.sigma_n != 0:
            raise ConfigError(f"sigma_n has no effect in noiseless mode, got {self.sigma_n!r}")
        if not isinstance(self.ddim_steps, (int, np.integer)) or self.ddim_steps < 1:
            raise ConfigError(f"ddim_steps must be a positive int, got {self.ddim_steps!r}")
        if not isinstance(self.seed, (int, np.integer)):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must be in [0, 1], got {self.eta!r}")
        if self.stepper == "ddpm" and self.eta != 0.0:
            raise ConfigError("eta only applies to stepper='ddim'")
        if not self.solver_tol > 0:
            raise ConfigError(f"solver_tol must be positive, got {self.solver_tol!r}")
        if not isinstance(self.solver_max_iter, (int, np.integer)) or self.solver_max_iter < 1:
            raise ConfigError(f"solver_max_iter must be a positive int, got {self.solver_max_iter!r}")
        if self.clamp is not None:
            if len(self.clamp) != 2 or not self.clamp[0] < self.clamp[1]:
                raise ConfigError(f"clamp must be (lo, hi) with lo < hi, got {self.clamp!r}")


@dataclass
class SampleTrace:
    """Per-step record of a sampling run.

    ts holds the visited timesteps in order (strictly decreasing),
    residuals the data residual of each refined clean-image estimate
    (relative to ||y|| when y is nonzero, absolute otherwise), and
    durations the wall-clock seconds spent on each step.
    """

    ts: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    durations: list = field(default_factory=list)

    def append(self, t, residual, duration):
        if self.ts and t >= self.ts[-1]:
            raise ParameterError(f"trace timesteps must decrease, got {t} after {self.ts[-1]}")
        self.ts.append(int(t))
        self.residuals.append(float(residual))
        self.durations.append(float(duration))

    def __len__(self):
        return len(self.ts)


def _refined_estimate(op, x_t, t, y, denoiser, schedule, config, params, condition):
    eps_hat = denoiser.predict_eps(x_t, t, condition)
    x0_hat = predict_x0_from_eps(schedule, x_t, t, eps_hat)
    try:
        if config.mode == "noisy":
            refined = refine_noisy(
                op, x0_hat, y, params, t,
                tol=config.solver_tol, max_iter=config.solver_max_iter,
            )
        else:
            refined = refine_noiseless(
                op, x0_hat, y,
                tol=config.solver_tol, max_iter=config.solver_max_iter,
            )
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"refinement solve failed at t={t}: {exc}",
            residual=exc.residual, iterations=exc.iterations,
        ) from exc
    return refined, eps_hat


def reverse_sample(schedule, op, y, denoiser, config=None, condition=None):
    """Sample an image consistent with measurement y. Returns (image, trace).

    y must match op.output_shape. The denoiser is called once per visited
    timestep. Solver failures abort with the offending timestep in the
    message. The output is clamped only at the very end, if configured.
    """
    if config is None:
        config = SamplerConfig()
    y = as_float_array(y, "y")
    check_shape(y, op.output_shape, "y")
    T = schedule.T
    if config.stepper == "ddim":
        if config.ddim_steps > T:
            raise ConfigError(f"ddim_steps={config.ddim_steps} exceeds T={T}")
        subsequence = ddim_timesteps(T, config.ddim_steps)
    params = compute_gamma_phi(schedule, config.sigma_n) if config.mode == "noisy" else None

    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal(op.input_shape)
    y_norm = float(np.linalg.norm(y))
    denom = y_norm if y_norm > 0 else 1.0
    trace = SampleTrace()

    if config.stepper == "ddpm":
        visits = list(range(T, 0, -1))
        for t in visits:
            started = time.perf_counter()
            refined, _ = _refined_estimate(
                op, x, t, y, denoiser, schedule, config, params, condition)
            if config.record_trace:
                residual = float(np.linalg.norm(op.apply(refined) - y)) / denom
            if config.mode == "noisy":
                x = step_noisy(schedule, params, x, refined, t, rng)
            else:
                noise = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
                x = ddpm_step(schedule, x, refined, t, noise)
            if config.record_trace:
                trace.append(t, residual, time.perf_counter() - started)
    else:
        steps = subsequence.steps
        for i in range(len(steps) - 1, -1, -1):
            t = steps[i]
            started = time.perf_counter()
            refined, eps_hat = _refined_estimate(
                op, x, t, y, denoiser, schedule, config, params, condition)
            if config.record_trace:
                residual = float(np.linalg.norm(op.apply(refined) - y)) / denom
            if config.eta > 0 and i > 0:
                noise = rng.standard_normal(x.shape)
            else:
                noise = np.zeros_like(x)
            x = ddim_step(schedule, subsequence, x, refined, eps_hat, i, config.eta, noise)
            if config.record_trace:
                trace.append(t, residual, time.perf_counter() - started)

    if config.clamp is not None:
        x = np.clip(x, config.clamp[0], config.clamp[1])
    return x, trace


def run_repeated(schedule, experiments, truth, denoiser, n_seeds, noise_std=0.0,
                 base_seed=0, condition=None):
    """Run each named experiment across n_seeds seeds and aggregate metrics.

    experiments: sequence of (name, op, config) triples. For seed index k the
    measurement is y = op.apply(truth) + noise_std * g_k, where g_k depends
    only on (base_seed, k) and the measurement shape, so experiments that
    share an operator see identical data. The sampler seed is config.seed + k.
    Returns one row dict per experiment with per-seed and mean/std metrics.
    """
    truth = as_float_array(truth, "truth")
    if not isinstance(n_seeds, (int, np.integer)) or n_seeds < 1:
        raise ParameterError(f"n_seeds must be a positive int, got {n_seeds!r}")
    rows = []
    for name, op, config in experiments:
        psnrs, ssims = [], []
        clean = op.apply(truth)
        for k in range(n_seeds):
            y = clean
            if noise_std > 0:
                # Keyed independently of the sampler seed stream.
                meas_rng = np.random.default_rng([1, base_seed, k])
                y = clean + noise_std * meas_rng.standard_normal(op.output_shape)
            run_config = replace(config, seed=config.seed + k)
            recon, _ = reverse_sample(schedule, op, y, denoiser,
                                      config=run_config, condition=condition)
            psnrs.append(psnr(truth, recon, data_range=1.0))
            ssims.append(ssim(truth, recon, data_range=1.0))
        rows.append({
            "name": name,
            "n_seeds": int(n_seeds),
            "psnr": psnrs,
            "ssim": ssims,
            "psnr_mean": float(np.mean(psnrs)),
            "psnr_std": float(np.std(psnrs, ddof=1)) if n_seeds > 1 else 0.0,
            "ssim_mean": float(np.mean(ssims)),
            "ssim_std": float(np.std(ssims, ddof=1)) if n_seeds > 1 else 0.0,
        })
    return rows


def format_metrics_table(rows):
    """Render run_repeated rows as an aligned mean +/- std text table."""
    width = max([len("experiment")] + [len(r["name"]) for r in rows])
    lines = [f"{'experiment':<{width}}  {'psnr [dB]':>18}  {'ssim':>18}  seeds"]
    for r in rows:
        p = f"{r['psnr_mean']:.3f} +/- {r['psnr_std']:.3f}"
        s = f"{r['ssim_mean']:.4f} +/- {r['ssim_std']:.4f}"
        lines.append(f"{r['name']:<{width}}  {p:>18}  {s:>18}  {r['n_seeds']}")
    return "\n".join(lines)
