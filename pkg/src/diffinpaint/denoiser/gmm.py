"""Exact MMSE noise predictor for Gaussian-mixture data.

If ``x0`` follows a mixture of isotropic Gaussians, the forward marginal
``x_t = sqrt(abar) x0 + sqrt(1 - abar) eps`` is again such a mixture, so the
posterior mean ``E[x0 | x_t]`` and hence the Bayes-optimal noise prediction are
available in closed form. Samplers driven by this oracle should reproduce the
mixture, which gives ground truth for end-to-end tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ConfigurationError, ShapeError
from ..rng import SeedLike, as_generator
from .base import Denoiser


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture of isotropic Gaussians.

    ``means`` has shape ``(K,)`` or ``(K, D)``. With ``D == 1`` the mixture is
    applied independently to every pixel; otherwise it is a joint law over
    the ``D`` values of one image. A zero std gives a point mass.
    """

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        mu = np.asarray(self.means, dtype=np.float64)
        mu = mu.reshape(-1, 1) if mu.ndim <= 1 else mu
        s = np.atleast_1d(np.asarray(self.stds, dtype=np.float64))
        if mu.ndim != 2 or not (w.shape == s.shape == (mu.shape[0],)):
            raise ConfigurationError("weights, means and stds must agree on the component count")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigurationError("mixture weights must be nonnegative and sum to 1")
        if np.any(s < 0) or not np.all(np.isfinite(s)) or not np.all(np.isfinite(mu)):
            raise ConfigurationError("mixture stds must be finite and nonnegative")
        for name, arr in (("weights", w), ("means", mu), ("stds", s)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def rows(self, x):
        """Reshape ``x`` to ``(-1, dim)``; ``dim`` must match trailing axes."""
        x = np.asarray(x)
        if self.dim == 1:
            return x.reshape(-1, 1)
        size = 1
        for n in reversed(x.shape):
            size *= n
            if size == self.dim:
                return x.reshape(-1, self.dim)
            if size > self.dim:
                break
        raise ShapeError(f"trailing axes of {x.shape} do not span the mixture dimension {self.dim}")

    def sample(self, shape, rng: SeedLike = None) -> np.ndarray:
        """Draw an array of ``shape``; for joint mixtures the trailing axes hold one draw."""
        rng = as_generator(rng)
        n = int(np.prod(shape)) // self.dim
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        draws = self.means[comp] + self.stds[comp, None] * noise
        return draws.reshape(shape)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d) -> "GaussianMixture":
        return cls(d["weights"], d["means"], d["stds"])


def equicorrelated_gaussian(dim: int, rho: float, n_nodes: int = 101) -> GaussianMixture:
    """Isotropic-component mixture approximating N(0, (1 - rho) I + rho 11^T).

    A zero-mean Gaussian with unit variances and pairwise correlation
    ``rho`` is the law of ``u * 1 + sqrt(1 - rho) * e`` with ``u ~ N(0, rho)``;
    ``u`` is discretized with Gauss-Hermite nodes.
    """
    if not 0.0 < rho < 1.0:
        raise ConfigurationError("rho must lie in (0, 1)")
    nodes, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    w = w / w.sum()
    means = np.sqrt(rho) * nodes[:, None] * np.ones((1, dim))
    return GaussianMixture(w, means, np.full(n_nodes, np.sqrt(1.0 - rho)))


def gmm_posterior_mean_x0(gmm: GaussianMixture, x_t, t, schedule) -> np.ndarray:
    """E[x0 | x_t] under the mixture prior and the forward marginal at step ``t``."""
    x_t = np.asarray(x_t)
    sqrt_ab = float(np.sqrt(schedule.alpha_bar_at(int(schedule.check_t(t)))))
    with np.errstate(divide="ignore"):
        log_w = np.log(gmm.weights)
    rows = kernels.gmm_posterior_mean(gmm.rows(x_t), sqrt_ab, gmm.means, gmm.stds, log_w)
    return rows.reshape(x_t.shape)


class GMMOracleDenoiser(Denoiser):
    """Bayes-optimal noise predictor for data drawn from ``gmm``."""

    def __init__(self, gmm: GaussianMixture, schedule):
        self.gmm = gmm
        self.schedule = schedule

    def predict_epsilon(self, x_t, t, condition=None):
        self._check_condition(condition)
        x_t = np.asarray(x_t)
        t_arr = self.schedule.check_t(t)
        if t_arr.ndim:
            # per-sample timesteps: evaluate each distinct t separately
            out = np.empty(x_t.shape, dtype=np.float64)
            for tv in np.unique(t_arr):
                sel = t_arr == tv
                out[sel] = self.predict_epsilon(x_t[sel], int(tv))
            return out.astype(x_t.dtype if np.issubdtype(x_t.dtype, np.floating) else np.float64)
        ab = float(self.schedule.alpha_bar_at(int(t_arr)))
        x0_hat = gmm_posterior_mean_x0(self.gmm, x_t, int(t_arr), self.schedule)
        eps = (x_t - np.sqrt(ab) * x0_hat) / np.sqrt(1.0 - ab)
        return eps.astype(x_t.dtype if np.issubdtype(x_t.dtype, np.floating) else np.float64, copy=False)


def make_gmm_oracle(gmm: GaussianMixture, schedule) -> GMMOracleDenoiser:
    return GMMOracleDenoiser(gmm, schedule)
