"""Backend selection for the hot loops.

The compiled Cython extension is used when it has been built; otherwise the
numpy implementation is used. Setting ``DIFFINPAINT_PURE_PYTHON=1`` forces the
numpy path (the benchmark and the backend-parity tests rely on this).
"""
import os

import numpy as np

from . import _pykernels

if os.environ.get("DIFFINPAINT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"


def gmm_posterior_mean(x, sqrt_ab, means, stds, log_weights, impl=None):
    """Posterior mean E[x0 | x_t] for rows of ``x`` (shape ``(N, D)``)."""
    impl = impl or _impl
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(x)
    impl.gmm_posterior_mean(
        x,
        float(sqrt_ab),
        np.ascontiguousarray(means, dtype=np.float64),
        np.ascontiguousarray(stds, dtype=np.float64),
        np.ascontiguousarray(log_weights, dtype=np.float64),
        out,
    )
    return out


def ddpm_update(x_t, eps_hat, z, inv_sqrt_alpha, eps_coef, sigma, dtype, impl=None):
    """Fused reverse-step arithmetic; returns ``(x_prev, all_finite)``."""
    impl = impl or _impl
    shape = x_t.shape
    flat = [np.ascontiguousarray(a, dtype=dtype).ravel() for a in (x_t, eps_hat, z)]
    out = np.empty(flat[0].shape, dtype=dtype)
    ok = impl.ddpm_update(*flat, float(inv_sqrt_alpha), float(eps_coef), float(sigma), out)
    return out.reshape(shape), bool(ok)
