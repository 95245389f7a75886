"""The noise-predictor interface shared by analytic and learned denoisers."""
import abc

from ..errors import VariantMismatchError


class Denoiser(abc.ABC):
    """Predicts the noise component of a diffused image.

    ``x_t`` has shape ``(C, H, W)`` or ``(N, C, H, W)``; ``t`` is a 1-based
    timestep (scalar, or one per batch entry). Conditional denoisers take
    ``condition=(x_known, mask)`` and stack it onto their input.
    """

    conditional = False

    @abc.abstractmethod
    def predict_epsilon(self, x_t, t, condition=None):
        ...

    def _check_condition(self, condition):
        if self.conditional and condition is None:
            raise VariantMismatchError("conditional denoiser called without (x_known, mask)")
        if not self.conditional and condition is not None:
            raise VariantMismatchError("unconditional denoiser does not accept a condition")
