"""Command-line surface: phantom generation, projection, reconstruction,
evaluation, and schedule inspection.

Exit codes: 2 bad config or arguments, 3 file I/O problems, 4 solver
non-convergence, 5 denoiser protocol failures.
"""

import functools
import json
from pathlib import Path

import click
import numpy as np

from .denoiser import ExternalDenoiser, GaussianDenoiser, GaussianPrior
from .errors import (
    ConfigError,
    ConvergenceError,
    DenoiserError,
    FileFormatError,
    ParameterError,
    ShapeError,
)
from .io import load_image, load_sinogram, save_image, save_sinogram
from .metrics import psnr, ssim
from .operators import Image, RadonOperator, fbp_reconstruct
from .phantoms import PhantomSpec, make_condition_pair, random_phantom, shepp_logan
from .protocol import DenoiserClient
from .refinement import compute_gamma_phi
from .sampler import SamplerConfig, reverse_sample
from .schedule import build_linear_schedule

# Prior used by --denoiser gaussian: a flat unit-range guess, mean 0.5 with
# std 0.5, so the measurement terms dominate the reconstruction.
DEFAULT_PRIOR_MEAN = 0.5
DEFAULT_PRIOR_VAR = 0.25

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4
EXIT_PROTOCOL = 5


def guarded(fn):
    """Map library errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ParameterError, ShapeError) as exc:
            _fail(EXIT_CONFIG, exc)
        except FileFormatError as exc:
            _fail(EXIT_IO, exc)
        except ConvergenceError as exc:
            _fail(EXIT_SOLVER, exc)
        except DenoiserError as exc:
            _fail(EXIT_PROTOCOL, exc)
        except OSError as exc:
            _fail(EXIT_IO, exc)

    return wrapper


def _fail(code, exc):
    click.echo(f"error: {exc}", err=True)
    raise SystemExit(code)


@click.group()
def main():
    """Sparse-view tomography via measurement-guided diffusion sampling."""


@main.command()
@click.option("--size", type=int, default=64, show_default=True, help="Image side length.")
@click.option("--seed", type=int, default=None,
              help="Perturb the layout deterministically; omit for the standard phantom.")
@click.option("--condition-out", type=click.Path(dir_okay=False), default=None,
              help="Also write a companion condition image derived from the phantom.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
@guarded
def phantom(size, seed, condition_out, output):
    """Write a synthetic test image."""
    if seed is None:
        image = shepp_logan(size)
    else:
        image = random_phantom(PhantomSpec(size=size, seed=seed))
    save_image(output, Image(image))
    click.echo(f"wrote {output} ({size}x{size})")
    if condition_out is not None:
        cond = make_condition_pair(image, 0 if seed is None else seed)
        save_image(condition_out, Image(cond))
        click.echo(f"wrote {condition_out} (condition)")


@main.command()
@click.option("--angles", type=int, default=23, show_default=True, help="Projection count.")
@click.option("--noise-std", type=float, default=0.0, show_default=True,
              help="Gaussian noise level added to the sinogram.")
@click.option("--seed", type=int, default=0, show_default=True, help="Noise seed.")
@click.option("-i", "--input", "input_path", type=click.Path(dir_okay=False), required=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
@guarded
def project(angles, noise_std, seed, input_path, output):
    """Project an image into a sinogram, optionally adding noise."""
    if noise_std < 0:
        raise ParameterError(f"noise-std must be >= 0, got {noise_std}")
    image = load_image(input_path)
    if image.height != image.width:
        raise ShapeError(f"projection needs a square image, got {image.pixels.shape}")
    op = RadonOperator(image.height, angles)
    values = op.apply(image.pixels)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        values = values + noise_std * rng.standard_normal(op.output_shape)
    save_sinogram(output, op.sinogram(values))
    click.echo(f"wrote {output} ({angles} angles, noise std {noise_std})")


RECONSTRUCT_KEYS = (
    "method", "mode", "stepper", "steps", "T", "eta", "sigma_n", "denoiser",
    "endpoint", "seed", "tol", "max_iter", "size", "input", "condition", "output",
)


def _merge_config(ctx, config_path, values):
    """Overlay JSON config beneath explicitly passed flags."""
    if config_path is None:
        return values
    try:
        doc = json.loads(Path(config_path).read_text())
    except OSError as exc:
        raise FileFormatError(f"cannot read config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {config_path} must hold a JSON object")
    unknown = sorted(set(doc) - set(RECONSTRUCT_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    merged = dict(values)
    from click.core import ParameterSource

    for key, value in doc.items():
        source = ctx.get_parameter_source(key)
        if source != ParameterSource.COMMANDLINE:
            merged[key] = value
    return merged


def _build_denoiser(kind, endpoint, schedule):
    """Returns (denoiser, closer). The closer shuts down any connection."""
    if kind == "gaussian":
        prior = GaussianPrior(DEFAULT_PRIOR_MEAN, DEFAULT_PRIOR_VAR)
        return GaussianDenoiser(prior, schedule), lambda: None
    if kind != "external":
        raise ConfigError(f"denoiser must be 'gaussian' or 'external', got {kind!r}")
    if not endpoint:
        raise ConfigError("denoiser 'external' needs --endpoint or NSMI_DENOISER_ENDPOINT")
    client = DenoiserClient(endpoint)
    client.connect()
    return ExternalDenoiser(client), client.close


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON config; explicit flags override its values.")
@click.option("--method", type=click.Choice(["fbp", "pinv", "ddmm"]), default="ddmm",
              show_default=True)
@click.option("--mode", type=click.Choice(["noiseless", "noisy"]), default="noiseless",
              show_default=True)
@click.option("--stepper", type=click.Choice(["ddpm", "ddim"]), default="ddim",
              show_default=True)
@click.option("--steps", type=int, default=100, show_default=True,
              help="Timesteps visited by the ddim stepper.")
@click.option("--T", "T", type=int, default=2000, show_default=True,
              help="Diffusion schedule length.")
@click.option("--eta", type=float, default=0.0, show_default=True)
@click.option("--sigma-n", "sigma_n", type=float, default=0.0, show_default=True,
              help="Measurement noise level in image units (noisy mode).")
@click.option("--denoiser", type=click.Choice(["gaussian", "external"]), default="gaussian",
              show_default=True)
@click.option("--endpoint", type=str, default=None, envvar="NSMI_DENOISER_ENDPOINT",
              help="host:port of an external denoiser (default from NSMI_DENOISER_ENDPOINT).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True,
              help="Least-squares solver tolerance.")
@click.option("--max-iter", "max_iter", type=int, default=2000, show_default=True,
              help="Least-squares solver iteration cap.")
@click.option("--size", type=int, default=None,
              help="Image side length; defaults to the sinogram's detector count.")
@click.option("-i", "--input", "input", type=click.Path(dir_okay=False), default=None,
              help="Input sinogram (required here or in the config file).")
@click.option("--condition", "condition", type=click.Path(dir_okay=False), default=None,
              help="Condition image forwarded to the denoiser.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None,
              help="Output image (required here or in the config file).")
@click.pass_context
@guarded
def reconstruct(ctx, config_path, **values):
    """Reconstruct an image from a sinogram."""
    cfg = _merge_config(ctx, config_path, values)
    for key in ("input", "output"):
        if cfg[key] is None:
            raise ConfigError(f"{key} path required (flag or config file)")
    sino = load_sinogram(cfg["input"])
    size = cfg["size"] if cfg["size"] is not None else sino.n_detectors
    op = RadonOperator(size, sino.n_angles)
    if op.output_shape != sino.values.shape:
        raise ConfigError(
            f"sinogram shape {sino.values.shape} does not match the "
            f"{size}x{size}/{sino.n_angles}-angle geometry {op.output_shape}"
        )
    if not np.allclose(op.angles, sino.angles, atol=1e-9):
        raise ConfigError("sinogram angle grid does not match the uniform geometry")

    method = cfg["method"]
    if method == "fbp":
        recon = fbp_reconstruct(op, sino.values)
    elif method == "pinv":
        recon = np.clip(
            op.pinv_apply(sino.values, tol=cfg["tol"], max_iter=cfg["max_iter"]), 0.0, 1.0)
    elif method == "ddmm":
        recon = _reconstruct_sampled(op, sino, cfg)
    else:
        raise ConfigError(f"method must be fbp, pinv, or ddmm, got {method!r}")
    save_image(cfg["output"], Image(recon))
    click.echo(f"wrote {cfg['output']} (method {method})")


def _reconstruct_sampled(op, sino, cfg):
    schedule = build_linear_schedule(cfg["T"])
    sampler_config = SamplerConfig(
        mode=cfg["mode"], stepper=cfg["stepper"], ddim_steps=cfg["steps"],
        eta=cfg["eta"], sigma_n=cfg["sigma_n"], seed=cfg["seed"],
        solver_tol=cfg["tol"], solver_max_iter=cfg["max_iter"],
        clamp=(0.0, 1.0), record_trace=True,
    )
    condition = None
    if cfg["condition"] is not None:
        cond_image = load_image(cfg["condition"])
        if cond_image.pixels.shape != op.input_shape:
            raise ShapeError(
                f"condition shape {cond_image.pixels.shape} does not match "
                f"image shape {op.input_shape}"
            )
        condition = cond_image.pixels
    denoiser, closer = _build_denoiser(cfg["denoiser"], cfg["endpoint"], schedule)
    try:
        recon, trace = reverse_sample(
            schedule, op, sino.values, denoiser, sampler_config, condition)
    finally:
        closer()
    click.echo(f"final data residual {trace.residuals[-1]:.3e} over {len(trace)} steps")
    return recon


@main.command()
@click.option("--truth", "truth_path", type=click.Path(dir_okay=False), required=True)
@click.option("--recon", "recon_paths", type=click.Path(dir_okay=False), multiple=True,
              required=True, help="Reconstruction file; repeat for mean/std across runs.")
@guarded
def evaluate(truth_path, recon_paths):
    """Report PSNR/SSIM of reconstructions against the ground truth."""
    truth = load_image(truth_path)
    # SSIM needs at least one full window; smaller images get psnr only.
    with_ssim = min(truth.pixels.shape) >= 11
    psnrs, ssims = [], []
    click.echo("metrics: psnr/ssim, data range 1, ssim window 11 sigma 1.5")
    for path in recon_paths:
        recon = load_image(path)
        p = psnr(truth.pixels, recon.pixels, data_range=1.0)
        psnrs.append(p)
        if with_ssim:
            s = ssim(truth.pixels, recon.pixels, data_range=1.0)
            ssims.append(s)
            click.echo(f"{path}: psnr {p:.3f} dB, ssim {s:.4f}")
        else:
            click.echo(f"{path}: psnr {p:.3f} dB, ssim n/a")
    if len(recon_paths) > 1:
        p_std = float(np.std(psnrs, ddof=1))
        line = f"mean over {len(recon_paths)} runs: psnr {np.mean(psnrs):.3f} +/- {p_std:.3f} dB"
        if with_ssim:
            s_std = float(np.std(ssims, ddof=1))
            line += f", ssim {np.mean(ssims):.4f} +/- {s_std:.4f}"
        click.echo(line)


@main.command("schedule-dump")
@click.option("--T", "T", type=int, default=2000, show_default=True)
@click.option("--sigma-n", "sigma_n", type=float, default=0.0, show_default=True)
@guarded
def schedule_dump(T, sigma_n):
    """Print the schedule and refinement coefficients for audit."""
    schedule = build_linear_schedule(T)
    params = compute_gamma_phi(schedule, sigma_n)
    click.echo(f"{'t':>6} {'beta':>12} {'alpha_bar':>12} {'sigma':>12} {'gamma':>12} {'phi':>12}")
    for t in range(1, T + 1):
        click.echo(
            f"{t:>6} {schedule.beta[t]:>12.6g} {schedule.alpha_bar[t]:>12.6g} "
            f"{schedule.sigma(t):>12.6g} {params.gamma[t]:>12.6g} {params.phi[t]:>12.6g}"
        )


if __name__ == "__main__":
    main()
