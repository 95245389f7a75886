"""Denoising-diffusion inpainting: RePaint mixing, concat conditioning and evaluation."""
from . import kernels
from .diffusion import (NoiseSchedule, build_schedule, forward_diffuse, forward_kernel_step, reverse_step,
                        sample_unconditional)
from .errors import (ConfigurationError, DataError, DiffInpaintError, MaskError, NumericalDivergenceError,
                     ShapeError, VariantMismatchError)
from .inpaint import concat_condition, concat_inpaint, repaint_inpaint, repaint_step_mix

__version__ = "0.1.0"
KERNEL_BACKEND = kernels.BACKEND
