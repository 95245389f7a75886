from .base import Denoiser
from .checkpoint import load_checkpoint, save_checkpoint
from .gmm import (GaussianMixture, GMMOracleDenoiser, equicorrelated_gaussian, gmm_posterior_mean_x0,
                  make_gmm_oracle)
from .unet import DenoiserSpec, TorchDenoiser, make_trainable_denoiser

__all__ = [
    "Denoiser", "DenoiserSpec", "GaussianMixture", "GMMOracleDenoiser", "TorchDenoiser",
    "equicorrelated_gaussian", "gmm_posterior_mean_x0", "load_checkpoint", "make_gmm_oracle",
    "make_trainable_denoiser", "save_checkpoint",
]
