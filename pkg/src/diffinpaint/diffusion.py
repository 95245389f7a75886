"""Noise schedules and the forward/reverse diffusion arithmetic.

Timesteps are 1-based: ``t = 1 .. T`` index the noisy states and ``t = 0`` is
the clean-data endpoint. Schedule arrays are stored 0-based, so ``betas[t - 1]``
is the variance added at step ``t``; the ``*_at`` accessors take the 1-based
index directly and accept ``t = 0`` where that is meaningful.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigurationError, NumericalDivergenceError, ShapeError, VariantMismatchError
from .rng import SeedLike, substreams

SCHEDULE_KINDS = ("linear", "quadratic")
VARIANCE_KINDS = ("beta", "posterior")


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Per-timestep diffusion coefficients, all held in float64.

    ``sigmas`` is the reverse-step noise scale. With ``variance="beta"`` it is
    ``sqrt(beta_t)``; with ``variance="posterior"`` it is the square root of the
    true posterior variance ``(1 - abar_{t-1}) / (1 - abar_t) * beta_t``.
    """

    kind: str
    betas: np.ndarray
    variance: str = "beta"
    beta_start: float = field(default=0.0)
    beta_end: float = field(default=0.0)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0:
            raise ConfigurationError("betas must be a non-empty 1-D array")
        if not np.all((betas > 0) & (betas < 1)):
            raise ConfigurationError("every beta must lie strictly inside (0, 1)")
        if self.variance not in VARIANCE_KINDS:
            raise ConfigurationError(f"unknown variance choice {self.variance!r}")
        betas = betas.copy()
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        for name, arr in self._derived(betas).items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def _derived(self, betas):
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        prev = np.concatenate([[1.0], alpha_bars[:-1]])
        posterior = (1.0 - prev) / (1.0 - alpha_bars) * betas
        sigmas = np.sqrt(betas if self.variance == "beta" else posterior)
        return {
            "alphas": alphas,
            "alpha_bars": alpha_bars,
            "posterior_variances": posterior,
            "sigmas": sigmas,
        }

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def check_t(self, t, allow_zero=False):
        lo = 0 if allow_zero else 1
        t_arr = np.asarray(t)
        if not np.issubdtype(t_arr.dtype, np.integer):
            if not np.all(np.equal(np.mod(t_arr, 1), 0)):
                raise ConfigurationError(f"timestep must be an integer, got {t!r}")
            t_arr = t_arr.astype(np.int64)
        if np.any(t_arr < lo) or np.any(t_arr > self.T):
            raise ConfigurationError(f"timestep {t!r} outside [{lo}, {self.T}]")
        return t_arr

    def alpha_bar_at(self, t):
        """abar_t for 1-based ``t``; ``t = 0`` gives 1."""
        t = self.check_t(t, allow_zero=True)
        padded = np.concatenate([[1.0], self.alpha_bars])
        return padded[t]

    def beta_at(self, t):
        return self.betas[self.check_t(t) - 1]

    def alpha_at(self, t):
        return self.alphas[self.check_t(t) - 1]

    def sigma_at(self, t):
        return self.sigmas[self.check_t(t) - 1]

    def with_variance(self, variance: str) -> "NoiseSchedule":
        return NoiseSchedule(self.kind, self.betas, variance, self.beta_start, self.beta_end)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "T": self.T,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
            "variance": self.variance,
        }


def default_beta_range(T: int) -> tuple[float, float]:
    """The usual 1e-4..0.02 range over 1000 steps, rescaled to ``T`` steps.

    Rescaling keeps ``abar_T`` close to zero for short chains so that starting
    the reverse process from N(0, I) stays valid.
    """
    scale = 1000.0 / T
    return min(1e-4 * scale, 0.999), min(0.02 * scale, 0.999)


def build_schedule(kind: str = "linear", T: int = 1000, beta_start: float | None = None,
                   beta_end: float | None = None, variance: str = "beta") -> NoiseSchedule:
    """Construct a :class:`NoiseSchedule`.

    Parameters
    ----------
    kind : {"linear", "quadratic"}
        ``linear`` interpolates beta linearly; ``quadratic`` interpolates
        ``sqrt(beta)`` linearly.
    T : int
        Number of diffusion steps.
    beta_start, beta_end : float, optional
        Endpoints. Both default to :func:`default_beta_range`.
    variance : {"beta", "posterior"}
        Reverse-step variance choice.
    """
    if kind not in SCHEDULE_KINDS:
        raise ConfigurationError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 1:
        raise ConfigurationError(f"T must be a positive integer, got {T!r}")
    T = int(T)
    default_start, default_end = default_beta_range(T)
    beta_start = default_start if beta_start is None else float(beta_start)
    beta_end = default_end if beta_end is None else float(beta_end)
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigurationError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    frac = np.arange(T, dtype=np.float64) / (T - 1) if T > 1 else np.zeros(1)
    if kind == "linear":
        betas = beta_start + frac * (beta_end - beta_start)
    else:
        betas = (np.sqrt(beta_start) + frac * (np.sqrt(beta_end) - np.sqrt(beta_start))) ** 2
    return NoiseSchedule(kind, betas, variance, beta_start, beta_end)


def _float_dtype(*arrays):
    dtype = np.result_type(*arrays)
    return dtype if np.issubdtype(dtype, np.floating) else np.dtype(np.float32)


def _check_shapes(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise ShapeError(f"shape mismatch: {shape} vs {np.shape(a)}")


def _per_sample(coef, x):
    """Broadcast a scalar or per-sample (leading axis) coefficient over ``x``."""
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim == 0:
        return coef
    if coef.shape != x.shape[: coef.ndim]:
        raise ShapeError(f"per-sample timesteps {coef.shape} do not match batch {x.shape}")
    return coef.reshape(coef.shape + (1,) * (x.ndim - coef.ndim))


def forward_kernel_step(x_prev, t, eps, schedule: NoiseSchedule):
    """One forward-chain transition: sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps."""
    x_prev, eps = np.asarray(x_prev), np.asarray(eps)
    _check_shapes(x_prev, eps)
    beta = _per_sample(schedule.beta_at(t), x_prev)
    out = np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * eps
    return out.astype(_float_dtype(x_prev, eps), copy=False)


def forward_diffuse(x0, t, eps, schedule: NoiseSchedule):
    """Closed-form forward marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.

    ``t`` may be a scalar or an integer array matching the leading (batch)
    axes of ``x0``. ``t = 0`` is rejected; use the clean image directly.
    """
    x0, eps = np.asarray(x0), np.asarray(eps)
    _check_shapes(x0, eps)
    schedule.check_t(t)
    ab = _per_sample(schedule.alpha_bar_at(t), x0)
    out = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    return out.astype(_float_dtype(x0, eps), copy=False)


def reverse_coefficients(t: int, schedule: NoiseSchedule):
    """``(1/sqrt(alpha_t), (1 - alpha_t)/sqrt(1 - abar_t), sigma_t)``."""
    alpha = float(schedule.alpha_at(t))
    ab = float(schedule.alpha_bar_at(t))
    return 1.0 / np.sqrt(alpha), (1.0 - alpha) / np.sqrt(1.0 - ab), float(schedule.sigma_at(t))


def reverse_step(x_t, t: int, eps_hat, z, schedule: NoiseSchedule):
    """Ancestral reverse step x_t -> x_{t-1} given a noise estimate.

    With ``z = 0`` this is the model mean ``mu_theta(x_t, t)``. Callers pass
    ``z = 0`` at ``t = 1``.
    """
    x_t, eps_hat, z = np.asarray(x_t), np.asarray(eps_hat), np.asarray(z)
    _check_shapes(x_t, eps_hat, z)
    t = int(schedule.check_t(t))
    if not np.all(np.isfinite(eps_hat)):
        raise NumericalDivergenceError(f"non-finite noise estimate at timestep {t}", step=t)
    inv_sqrt_alpha, eps_coef, sigma = reverse_coefficients(t, schedule)
    out, ok = kernels.ddpm_update(x_t, eps_hat, z, inv_sqrt_alpha, eps_coef, sigma,
                                  _float_dtype(x_t))
    if not ok:
        raise NumericalDivergenceError(f"non-finite state produced at timestep {t}", step=t)
    return out


def clip_epsilon(x_t, t: int, eps_hat, schedule: NoiseSchedule, bound: float | None):
    """Re-derive ``eps_hat`` after clipping the implied clean image to ``[-bound, bound]``.

    ``bound=None`` returns ``eps_hat`` unchanged. Learned denoisers tend to
    hallucinate signal at high noise levels; bounding the implied ``x0`` keeps
    that error from compounding along the chain.
    """
    if bound is None or not np.all(np.isfinite(eps_hat)):
        return eps_hat  # non-finite estimates are reported by reverse_step, not clipped away
    ab = float(schedule.alpha_bar_at(t))
    x0_hat = (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)
    eps = (x_t - np.sqrt(ab) * np.clip(x0_hat, -bound, bound)) / np.sqrt(1.0 - ab)
    return eps.astype(np.asarray(eps_hat).dtype, copy=False)


def sample_unconditional(denoiser, schedule: NoiseSchedule, shape, rng: SeedLike = None,
                         dtype=np.float32, clip_x0: float | None = None):
    """Ancestral sampling from pure noise.

    ``shape`` may carry leading batch axes; every entry is an independent
    chain. Draws from the generation substream of ``rng``: first ``x_T`` and
    then one ``z`` per step for ``t = T .. 2``. ``clip_x0`` enables
    :func:`clip_epsilon` (off by default, which keeps the plain reverse step).
    """
    if getattr(denoiser, "conditional", False):
        raise VariantMismatchError("unconditional sampling needs an unconditional denoiser")
    gen = substreams(rng).generation
    x = gen.standard_normal(shape, dtype=dtype)
    for t in range(schedule.T, 0, -1):
        eps_hat = clip_epsilon(x, t, denoiser.predict_epsilon(x, t), schedule, clip_x0)
        z = gen.standard_normal(shape, dtype=dtype) if t > 1 else np.zeros(shape, dtype=dtype)
        x = reverse_step(x, t, eps_hat, z, schedule)
    return x
