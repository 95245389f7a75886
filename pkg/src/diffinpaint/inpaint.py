"""Diffusion inpainting: RePaint-style masked mixing and concat conditioning.

Mask convention throughout: 1 = known pixel, 0 = pixel to be generated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditioning import as_mask, concat_condition
from .diffusion import NoiseSchedule, clip_epsilon, forward_diffuse, reverse_step
from .errors import ConfigurationError, ShapeError, VariantMismatchError
from .rng import SeedLike, substreams

__all__ = [
    "InpaintConfig", "concat_condition", "concat_inpaint", "inpaint", "repaint_inpaint",
    "repaint_step_mix",
]

VARIANTS = ("repaint", "concat")


@dataclass(frozen=True)
class InpaintConfig:
    schedule: NoiseSchedule
    seed: int = 0
    variant: str = "repaint"
    mix_at_zero: bool = True
    clip_x0: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown inpainting variant {self.variant!r}")


def repaint_step_mix(x_gen, x_known, mask, t_minus_1: int, eps, schedule: NoiseSchedule):
    """Overwrite the known region of ``x_gen`` with ``x_known`` diffused to ``t_minus_1``.

    At ``t_minus_1 == 0`` the clean ``x_known`` is used and ``eps`` is ignored.
    """
    x_gen, x_known = np.asarray(x_gen), np.asarray(x_known)
    if x_gen.shape != x_known.shape:
        raise ShapeError(f"generated {x_gen.shape} and known {x_known.shape} shapes differ")
    m = as_mask(mask, x_gen.shape)
    if t_minus_1 == 0:
        noised = x_known
    else:
        noised = forward_diffuse(x_known, t_minus_1, eps, schedule)
    return np.where(m == 1, noised, x_gen).astype(x_gen.dtype, copy=False)


def _prepare(x_known, mask, dtype):
    x_known = np.asarray(x_known, dtype=dtype)
    if x_known.ndim not in (3, 4):
        raise ShapeError(f"x_known must be (C, H, W) or (N, C, H, W), got {x_known.shape}")
    return x_known, as_mask(mask, x_known.shape)


def repaint_inpaint(x_known, mask, denoiser, schedule: NoiseSchedule, rng: SeedLike = None,
                    mix_at_zero: bool = True, dtype=np.float32, clip_x0: float | None = None):
    """Inpaint with an unconditional denoiser by per-step masked mixing.

    One reverse step and one mix per timestep, without resampling. Generation
    noise (``x_T`` and each ``z``) comes from the generation substream in the
    same order as :func:`~diffinpaint.diffusion.sample_unconditional`, and the
    noise used to diffuse ``x_known`` comes from a separate substream.
    """
    if getattr(denoiser, "conditional", False):
        raise VariantMismatchError("RePaint mixing needs an unconditional denoiser")
    x_known, m = _prepare(x_known, mask, dtype)
    shape = x_known.shape
    gen, known = substreams(rng)
    x = gen.standard_normal(shape, dtype=dtype)
    for t in range(schedule.T, 0, -1):
        eps_hat = clip_epsilon(x, t, denoiser.predict_epsilon(x, t), schedule, clip_x0)
        z = gen.standard_normal(shape, dtype=dtype) if t > 1 else np.zeros(shape, dtype=dtype)
        x = reverse_step(x, t, eps_hat, z, schedule)
        if t > 1:
            x = repaint_step_mix(x, x_known, m, t - 1, known.standard_normal(shape, dtype=dtype), schedule)
        elif mix_at_zero:
            x = repaint_step_mix(x, x_known, m, 0, None, schedule)
    return x


def concat_inpaint(x_known, mask, denoiser, schedule: NoiseSchedule, rng: SeedLike = None,
                   dtype=np.float32, clip_x0: float | None = None):
    """Inpaint with a denoiser trained on ``[x_t, x_known * M, M]`` inputs.

    Known pixels are pasted back from ``x_known`` after the final step.
    """
    if not getattr(denoiser, "conditional", False):
        raise VariantMismatchError("concat inpainting needs a conditional denoiser")
    x_known, m = _prepare(x_known, mask, dtype)
    shape = x_known.shape
    gen = substreams(rng).generation
    x = gen.standard_normal(shape, dtype=dtype)
    for t in range(schedule.T, 0, -1):
        eps_hat = clip_epsilon(x, t, denoiser.predict_epsilon(x, t, condition=(x_known, m)), schedule, clip_x0)
        z = gen.standard_normal(shape, dtype=dtype) if t > 1 else np.zeros(shape, dtype=dtype)
        x = reverse_step(x, t, eps_hat, z, schedule)
    return np.where(m == 1, x_known, x).astype(dtype, copy=False)


def inpaint(x_known, mask, denoiser, config: InpaintConfig):
    if config.variant == "repaint":
        return repaint_inpaint(x_known, mask, denoiser, config.schedule, config.seed, config.mix_at_zero,
                               clip_x0=config.clip_x0)
    return concat_inpaint(x_known, mask, denoiser, config.schedule, config.seed, clip_x0=config.clip_x0)
