"""Pure-numpy implementations of the hot loops in ``_ckernels``."""
import numpy as np
from scipy.special import logsumexp


def gmm_posterior_mean(x, sqrt_ab, means, stds, log_weights, out):
    ab = sqrt_ab * sqrt_ab
    dim = x.shape[1]
    var = ab * stds**2 + (1.0 - ab)
    gain = sqrt_ab * stds**2 / var
    centred = x[:, None, :] - sqrt_ab * means[None, :, :]  # (N, K, D)
    d2 = np.einsum("nkd,nkd->nk", centred, centred)
    logits = log_weights - 0.5 * d2 / var - 0.5 * dim * np.log(var)
    resp = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    comp_means = means[None, :, :] + gain[None, :, None] * centred
    out[...] = np.einsum("nk,nkd->nd", resp, comp_means)


def ddpm_update(x_t, eps_hat, z, inv_sqrt_alpha, eps_coef, sigma, out):
    """out = inv_sqrt_alpha * (x_t - eps_coef * eps_hat) + sigma * z."""
    v = inv_sqrt_alpha * (x_t.astype(np.float64) - eps_coef * eps_hat) + sigma * z.astype(np.float64)
    out[...] = v
    return bool(np.isfinite(v).all())
