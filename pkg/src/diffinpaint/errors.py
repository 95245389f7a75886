"""Exception hierarchy shared by every module."""


class DiffInpaintError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DiffInpaintError, ValueError):
    """Invalid schedule, spec, or run configuration."""


class ShapeError(DiffInpaintError, ValueError):
    """Tensor, mask, or spatial shapes are inconsistent."""


class VariantMismatchError(DiffInpaintError, ValueError):
    """A conditional denoiser was used where an unconditional one is required, or vice versa."""


class DataError(DiffInpaintError):
    """Unreadable or malformed input data."""


class NumericalDivergenceError(DiffInpaintError, ArithmeticError):
    """A non-finite value appeared during sampling or training."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class MaskError(DiffInpaintError, ValueError):
    """Mask values outside {0, 1} or an impossible coverage request."""
