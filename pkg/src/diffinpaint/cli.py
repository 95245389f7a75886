"""Command-line interface.

Exit codes: 0 success, 1 usage/configuration error, 2 data error, 3 numerical
divergence. ``DIFFINPAINT_DATA_DIR`` supplies the default ``--data`` /
``--input`` location.

Mask rasters given to ``inpaint`` and ``make-cd-dataset`` mark the region to
regenerate in white.
"""
from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from .changedet import build_cd_dataset
from .denoiser import DenoiserSpec, load_checkpoint, make_trainable_denoiser, save_checkpoint
from .diffusion import build_schedule, sample_unconditional
from .errors import (ConfigurationError, DataError, DiffInpaintError, MaskError, NumericalDivergenceError,
                     ShapeError, VariantMismatchError)
from .inpaint import concat_inpaint, repaint_inpaint
from .io import load_image, load_mask, load_tensor, save_image, save_tensor
from .metrics import evaluate_inpainting
from .training import TrainConfig, extract_patches, make_synthetic_dataset, train

DATA_ENV = "DIFFINPAINT_DATA_DIR"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGENCE = 0, 1, 2, 3

log = logging.getLogger("diffinpaint")


def load_dataset(path) -> list[np.ndarray]:
    """Images from a ``.tnsr`` file (``(N, C, H, W)`` or ``(C, H, W)``) or a directory of PNGs."""
    p = Path(path)
    if p.is_file():
        x = load_tensor(p)
        return list(x) if x.ndim == 4 else [x]
    if not p.is_dir():
        raise DataError(f"data path {p} does not exist")
    files = sorted(p.glob("*.png"))
    if files:
        return [load_image(f) for f in files]
    tensors = sorted(p.glob("*.tnsr"))
    if tensors:
        return [img for t in tensors for img in load_dataset(t)]
    raise DataError(f"no .png or .tnsr files in {p}")


def _schedule(steps, denoiser=None):
    stored = getattr(denoiser, "meta", {}).get("schedule") if denoiser is not None else None
    if stored and (steps is None or steps == stored["T"]):
        return build_schedule(stored["kind"], stored["T"], stored["beta_start"], stored["beta_end"],
                              stored.get("variance", "beta"))
    spec = getattr(denoiser, "spec", None)
    if getattr(spec, "output", "epsilon") == "v":
        raise ConfigurationError(f"--steps {steps} differs from the model's training length T={spec.schedule['T']}; "
                                 "v-output models only run on their training schedule")
    return build_schedule("linear", steps or 1000)


def _clip(value):
    return value if value and value > 0 else None


clip_option = click.option("--clip-x0", type=float, default=1.0, show_default=True,
                           help="Clip the implied clean image to [-c, c] at every step; 0 disables.")


def _out_dir(ctx) -> Path:
    out = Path(ctx.obj["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _data_default(value, what="--data"):
    value = value or os.environ.get(DATA_ENV)
    if not value:
        raise click.UsageError(f"{what} is required (or set {DATA_ENV})")
    return value


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON file with defaults for the command (e.g. TrainConfig fields).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def cli(ctx, config_path, seed, out, verbose):
    """Diffusion inpainting toolkit."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format="%(message)s")
    config = {}
    if config_path:
        try:
            config = json.loads(Path(config_path).read_text())
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigurationError("config file must hold a JSON object")
    ctx.obj = {"config": config, "seed": seed, "out": out}


@cli.command("synth-data")
@click.option("--kind", type=click.Choice(["gaussian-blob-textures", "gmm-pixels"]),
              default="gaussian-blob-textures", show_default=True)
@click.option("--count", type=int, default=200, show_default=True)
@click.option("--size", type=int, default=16, show_default=True)
@click.option("--channels", type=int, default=3, show_default=True)
@click.option("--correlation-length", type=float, default=2.5, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["png", "tensor"]), default="png", show_default=True)
@click.pass_context
def synth_data(ctx, kind, count, size, channels, correlation_length, fmt):
    """Write a synthetic image corpus."""
    shape = (channels, size, size)
    if kind == "gmm-pixels":
        params = {"gmm": ctx.obj["config"].get("gmm", {"weights": [0.5, 0.5], "means": [-0.5, 0.5],
                                                         "stds": [0.1, 0.1]}), "shape": shape}
    else:
        params = {"shape": shape, "correlation_length": correlation_length}
    images = make_synthetic_dataset(kind, params, count, ctx.obj["seed"])
    out = _out_dir(ctx)
    if fmt == "tensor":
        save_tensor(np.stack(images), out / "data.tnsr")
    else:
        for i, img in enumerate(images):
            save_image(img, out / f"{i:05d}.png")
    click.echo(f"wrote {count} images to {out}")


@cli.command("train")
@click.option("--data", type=click.Path(), default=None)
@click.option("--conditional", is_flag=True, help="Train a concat-conditioned inpainting model.")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--steps", type=int, default=None, help="Diffusion length T.")
@click.option("--patch-size", type=int, default=None)
@click.option("--overlap", type=float, default=None)
@click.option("--mask-kind", type=click.Choice(["rectangles", "blobs"]), default=None)
@click.option("--coverage", type=float, default=None)
@click.option("--base-channels", type=int, default=16, show_default=True)
@click.option("--multipliers", default="1,2,2", show_default=True)
@click.option("--output", type=click.Choice(["v", "epsilon"]), default="v", show_default=True,
              help="Output head: 'epsilon' predicts the noise directly, 'v' is converted to it.")
@click.pass_context
def train_cmd(ctx, data, conditional, epochs, batch_size, lr, steps, patch_size, overlap, mask_kind,
              coverage, base_channels, multipliers, output):
    """Train a noise predictor; writes model.dpnt, loss.csv and train_config.json."""
    fields = dict(ctx.obj["config"])
    fields.setdefault("seed", ctx.obj["seed"])
    overrides = {"epochs": epochs, "batch_size": batch_size, "learning_rate": lr, "T": steps,
                 "patch_size": patch_size, "patch_overlap": overlap, "mask_kind": mask_kind,
                 "mask_coverage": coverage}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    config = TrainConfig.from_dict(fields)
    images = load_dataset(_data_default(data))
    patches = []
    for img in images:
        if min(img.shape[-2:]) > config.patch_size:
            patches.extend(extract_patches(img, config.patch_size, config.patch_overlap))
        else:
            patches.append(img)
    try:
        mults = tuple(int(m) for m in multipliers.split(","))
    except ValueError as exc:
        raise click.BadParameter(f"--multipliers must be comma-separated ints: {exc}")
    schedule = build_schedule("linear", config.T)
    spec = DenoiserSpec(data_channels=patches[0].shape[0], base_channels=base_channels,
                        channel_multipliers=mults, conditional=conditional, output=output,
                        schedule=schedule.to_dict() if output == "v" else None)
    denoiser = make_trainable_denoiser(spec, config.seed)
    log.info("training on %d patches, %d parameters", len(patches), denoiser.parameter_count())
    denoiser, curve = train(denoiser, patches, config, schedule,
                            callback=lambda e, l: log.info("epoch %d loss %.5f", e, l))
    out = _out_dir(ctx)
    digest = save_checkpoint(denoiser, out / "model.dpnt")
    curve.to_csv(out / "loss.csv")
    (out / "train_config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    click.echo(f"checkpoint {out / 'model.dpnt'} sha256={digest}")


@cli.command("sample")
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True)
@click.option("--count", type=int, default=8, show_default=True)
@click.option("--size", type=int, default=16, show_default=True)
@click.option("--steps", type=int, default=None)
@clip_option
@click.pass_context
def sample_cmd(ctx, checkpoint, count, size, steps, clip_x0):
    """Draw unconditional samples."""
    denoiser = load_checkpoint(checkpoint)
    schedule = _schedule(steps, denoiser)
    x = sample_unconditional(denoiser, schedule, (count, denoiser.spec.data_channels, size, size), ctx.obj["seed"],
                             clip_x0=_clip(clip_x0))
    out = _out_dir(ctx)
    for i, img in enumerate(x):
        save_image(np.clip(img, -1, 1), out / f"sample_{i:04d}.png")
    click.echo(f"wrote {count} samples to {out}")


@cli.command("inpaint")
@click.option("--image", type=click.Path(dir_okay=False), required=True)
@click.option("--mask", type=click.Path(dir_okay=False), required=True, help="White = region to inpaint.")
@click.option("--variant", type=click.Choice(["repaint", "concat"]), default="repaint", show_default=True)
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True)
@click.option("--seed", "local_seed", type=int, default=None, help="Overrides the global --seed.")
@click.option("--steps", type=int, default=None)
@clip_option
@click.pass_context
def inpaint_cmd(ctx, image, mask, variant, checkpoint, local_seed, steps, clip_x0):
    """Inpaint one image; writes inpainted.png."""
    seed = ctx.obj["seed"] if local_seed is None else local_seed
    x = load_image(image)
    m = load_mask(mask)
    if m.shape != x.shape[-2:]:
        raise ShapeError(f"mask size {m.shape} does not match image size {x.shape[-2:]}")
    denoiser = load_checkpoint(checkpoint)
    schedule = _schedule(steps, denoiser)
    run = repaint_inpaint if variant == "repaint" else concat_inpaint
    result = run(x, m, denoiser, schedule, seed, clip_x0=_clip(clip_x0))
    out = _out_dir(ctx)
    save_image(np.clip(result, -1, 1), out / "inpainted.png")
    click.echo(str(out / "inpainted.png"))


@cli.command("eval")
@click.option("--data", type=click.Path(), default=None)
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True)
@click.option("--coverage", type=float, default=0.25, show_default=True)
@click.option("--mask-kind", type=click.Choice(["rectangles", "blobs"]), default="rectangles", show_default=True)
@click.option("--variant", type=click.Choice(["repaint", "concat"]), default="repaint", show_default=True)
@click.option("--steps", type=int, default=None)
@click.option("--count", type=int, default=None, help="Evaluate only the first N images.")
@clip_option
@click.pass_context
def eval_cmd(ctx, data, checkpoint, coverage, mask_kind, variant, steps, count, clip_x0):
    """Random-mask inpainting evaluation; writes report.json and items.csv."""
    images = load_dataset(_data_default(data))
    if count is not None:
        images = images[:count]
    denoiser = load_checkpoint(checkpoint)
    report = evaluate_inpainting(denoiser, images, _schedule(steps, denoiser), mask_kind=mask_kind,
                                 coverage=coverage, variant=variant, rng=ctx.obj["seed"], clip_x0=_clip(clip_x0))
    out = _out_dir(ctx)
    report.to_json(out / "report.json")
    report.to_csv(out / "items.csv")
    click.echo(f"SSIM {report.ssim_mean:.4f}  PSNR {report.psnr_mean} dB  "
               f"masked PSNR {report.masked_psnr_mean} dB (mean-fill {report.baseline_masked_psnr_mean} dB)")


@cli.command("make-cd-dataset")
@click.option("--input", "input_dir", type=click.Path(file_okay=False), default=None)
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True)
@click.option("--variant", type=click.Choice(["repaint", "concat"]), default="repaint", show_default=True)
@click.option("--steps", type=int, default=None)
@clip_option
@click.pass_context
def make_cd_dataset(ctx, input_dir, checkpoint, variant, steps, clip_x0):
    """Build a change-detection dataset from <id>/image.png + <id>/mask.png entries."""
    config = dict(ctx.obj["config"])
    config.update({"seed": ctx.obj["seed"], "checkpoint": checkpoint, "variant": variant,
                   "clip_x0": _clip(clip_x0)})
    if steps is not None:
        config["steps"] = steps
    manifest = build_cd_dataset(_data_default(input_dir, "--input"), ctx.obj["out"], config)
    click.echo(f"wrote {len(manifest['pairs'])} pairs to {ctx.obj['out']}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="diffinpaint", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except NumericalDivergenceError as exc:
        click.echo(f"error: numerical divergence: {exc}", err=True)
        return EXIT_DIVERGENCE
    except (ConfigurationError, VariantMismatchError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except (DataError, ShapeError, MaskError, DiffInpaintError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
