"""Noise-prediction training, patching, random masks and synthetic corpora."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from .conditioning import concat_condition
from .denoiser.gmm import GaussianMixture
from .diffusion import NoiseSchedule, build_schedule, forward_diffuse
from .errors import ConfigurationError, MaskError, NumericalDivergenceError, ShapeError
from .rng import SeedLike, as_generator

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 250
    batch_size: int = 128
    learning_rate: float = 1e-3
    T: int = 1000
    seed: int = 0
    patch_size: int = 64
    patch_overlap: float = 0.5
    mask_kind: str = "rectangles"
    mask_coverage: float = 0.25

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be at least 1")
        if not 0.0 <= self.patch_overlap < 1.0:
            raise ConfigurationError("patch_overlap must lie in [0, 1)")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown training config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class LossCurve:
    steps: list = field(default_factory=list)  # (step, epoch, loss)
    epoch_means: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "epoch", "loss"])
            for step, epoch, loss in self.steps:
                w.writerow([step, epoch, repr(float(loss))])


# --------------------------------------------------------------------------- patches

def patch_origins(dim: int, size: int, stride: int) -> list[int]:
    origins = list(range(0, dim - size + 1, stride))
    if origins[-1] != dim - size:
        origins.append(dim - size)
    return origins


def extract_patches(image, size: int, overlap: float = 0.5) -> list[np.ndarray]:
    """Overlapping ``size x size`` crops of a ``(C, H, W)`` image.

    The stride is ``round(size * (1 - overlap))``. When the last regular
    origin does not reach the border, an extra patch is anchored flush with
    it so every pixel is covered.
    """
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[None]
    if not 0.0 <= overlap < 1.0:
        raise ConfigurationError("overlap must lie in [0, 1)")
    H, W = image.shape[-2:]
    if size < 1 or size > min(H, W):
        raise ShapeError(f"patch size {size} does not fit a {H}x{W} image")
    stride = max(1, int(round(size * (1.0 - overlap))))
    return [image[..., i:i + size, j:j + size].copy()
            for i in patch_origins(H, size, stride)
            for j in patch_origins(W, size, stride)]


# --------------------------------------------------------------------------- masks

MASK_KINDS = ("rectangles", "blobs")


def synth_mask(shape, kind: str = "rectangles", coverage: float = 0.25, rng: SeedLike = None,
               tolerance: float = 0.05) -> np.ndarray:
    """Random binary mask of ``shape = (H, W)``; 0 marks the region to inpaint.

    ``coverage`` is the target unknown fraction. Rectangles are added until
    the target is met without overshooting it by more than ``tolerance``;
    blobs threshold a smoothed noise field at the matching quantile.
    """
    H, W = map(int, shape)
    if not 0.0 < coverage < 1.0:
        raise MaskError(f"coverage must lie strictly inside (0, 1), got {coverage}")
    rng = as_generator(rng)
    unknown = np.zeros((H, W), dtype=bool)
    if kind == "rectangles":
        limit = coverage + tolerance
        max_h, max_w = max(1, H // 2), max(1, W // 2)
        misses = 0
        while unknown.mean() < coverage:
            h = int(rng.integers(max(1, max_h // 4), max_h + 1))
            w = int(rng.integers(max(1, max_w // 4), max_w + 1))
            i, j = int(rng.integers(0, H - h + 1)), int(rng.integers(0, W - w + 1))
            trial = unknown.copy()
            trial[i:i + h, j:j + w] = True
            if trial.mean() <= limit:
                unknown, misses = trial, 0
                continue
            misses += 1
            if misses >= 20:  # shrink until a rectangle fits the remaining budget
                max_h, max_w, misses = max(1, max_h // 2), max(1, max_w // 2), 0
    elif kind == "blobs":
        field_ = ndimage.gaussian_filter(rng.standard_normal((H, W)), sigma=max(H, W) / 10.0, mode="wrap")
        k = int(round(coverage * H * W))
        order = np.argsort(field_, axis=None, kind="stable")[::-1]
        unknown.flat[order[:k]] = True
    else:
        raise ConfigurationError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    return (~unknown).astype(np.float32)


# --------------------------------------------------------------------------- synthetic data

DATASET_KINDS = ("gmm-pixels", "gaussian-blob-textures")


def blob_textures(count, shape=(3, 16, 16), correlation_length=2.5, channel_correlation=0.8,
                  contrast=1.0, rng: SeedLike = None) -> np.ndarray:
    """Smooth random fields squashed into [-1, 1].

    Each image mixes one shared and one per-channel Gaussian-filtered white
    noise field; ``correlation_length`` is the filter sigma in pixels.
    """
    C, H, W = shape
    if correlation_length <= 0 or not 0.0 <= channel_correlation <= 1.0:
        raise ConfigurationError("invalid blob texture parameters")
    rng = as_generator(rng)
    noise = rng.standard_normal((count, C + 1, H, W))
    smooth = ndimage.gaussian_filter(noise, sigma=(0, 0, correlation_length, correlation_length), mode="wrap")
    # std of unit white noise after a 2-D Gaussian filter
    smooth /= 1.0 / (2.0 * np.sqrt(np.pi) * correlation_length)
    shared, own = smooth[:, :1], smooth[:, 1:]
    mixed = channel_correlation * shared + np.sqrt(1.0 - channel_correlation**2) * own
    return np.tanh(contrast * mixed).astype(np.float32)


def make_synthetic_dataset(kind: str, params: dict | None, count: int, rng: SeedLike = None) -> list[np.ndarray]:
    """Generate ``count`` images for desk-scale experiments.

    ``gmm-pixels`` takes ``{"gmm": GaussianMixture | dict, "shape": (C, H, W)}``;
    ``gaussian-blob-textures`` takes the keyword arguments of :func:`blob_textures`.
    Images are clipped to [-1, 1].
    """
    params = dict(params or {})
    if count < 1:
        raise ConfigurationError("count must be at least 1")
    if kind == "gmm-pixels":
        gmm = params.pop("gmm", None)
        shape = tuple(params.pop("shape", (1, 8, 8)))
        if params:
            raise ConfigurationError(f"unknown gmm-pixels params {sorted(params)}")
        if gmm is None:
            raise ConfigurationError("gmm-pixels needs a 'gmm' parameter")
        if not isinstance(gmm, GaussianMixture):
            gmm = GaussianMixture.from_dict(gmm)
        data = gmm.sample((count, *shape), rng)
        images = np.clip(data, -1.0, 1.0).astype(np.float32)
    elif kind == "gaussian-blob-textures":
        try:
            images = blob_textures(count, rng=rng, **params)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc
    else:
        raise ConfigurationError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    return list(images)


# --------------------------------------------------------------------------- training

def sample_training_target(x0, schedule: NoiseSchedule, rng: SeedLike = None):
    """Draw ``t ~ U{1..T}``, ``eps ~ N(0, I)`` and diffuse ``x0``.

    For a batch ``(N, C, H, W)`` one timestep is drawn per item.
    """
    rng = as_generator(rng)
    x0 = np.asarray(x0)
    batched = x0.ndim == 4
    t = rng.integers(1, schedule.T + 1, size=x0.shape[0] if batched else None)
    eps = rng.standard_normal(x0.shape).astype(x0.dtype if np.issubdtype(x0.dtype, np.floating) else np.float32)
    return forward_diffuse(x0, t, eps, schedule), (t if batched else int(t)), eps


def epsilon_loss(eps_hat, eps) -> float:
    eps_hat, eps = np.asarray(eps_hat, dtype=np.float64), np.asarray(eps, dtype=np.float64)
    if eps_hat.shape != eps.shape:
        raise ShapeError(f"shape mismatch {eps_hat.shape} vs {eps.shape}")
    return float(np.mean((eps_hat - eps) ** 2))


def train(denoiser, dataset, config: TrainConfig, schedule: NoiseSchedule | None = None,
          rng: SeedLike = None, callback=None):
    """Fit ``denoiser`` (a :class:`~diffinpaint.denoiser.TorchDenoiser`) by noise regression.

    Conditional denoisers see ``[x_t, x0 * M, M]`` with a fresh random mask
    per item and epoch; the loss always covers the full noise tensor.
    Returns ``(denoiser, LossCurve)``.
    """
    data = np.stack([np.asarray(x, dtype=np.float32) for x in dataset]) if len(dataset) else None
    if data is None:
        raise ConfigurationError("training dataset is empty")
    if data.ndim != 4:
        raise ShapeError(f"training images must be (C, H, W), got batch {data.shape}")
    denoiser.check_input(data[:1])
    schedule = schedule or build_schedule("linear", config.T)
    spec = getattr(denoiser, "spec", None)
    if getattr(spec, "output", "epsilon") == "v" and spec.schedule["T"] != schedule.T:
        raise ConfigurationError(f"model was built for T={spec.schedule['T']}, training schedule has T={schedule.T}")
    rng = as_generator(config.seed if rng is None else rng)
    module = denoiser.module
    module.train()
    opt = torch.optim.Adam(module.parameters(), lr=config.learning_rate)
    curve = LossCurve()
    n = data.shape[0]
    H, W = data.shape[-2:]
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            x0 = data[order[start:start + config.batch_size]]
            x_t, t, eps = sample_training_target(x0, schedule, rng)
            inp = x_t
            if denoiser.conditional:
                masks = np.stack([synth_mask((H, W), config.mask_kind, config.mask_coverage, rng)
                                  for _ in range(x0.shape[0])])[:, None]
                inp = concat_condition(x_t, x0, masks)
            pred = module(torch.from_numpy(np.ascontiguousarray(inp)), torch.from_numpy(t.astype(np.float32)))
            loss = torch.mean((pred - torch.from_numpy(eps)) ** 2)
            value = float(loss.item())
            if not np.isfinite(value):
                raise NumericalDivergenceError(f"non-finite training loss at step {step}", step=step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            curve.steps.append((step, epoch, value))
            losses.append(value)
            step += 1
        curve.epoch_means.append(float(np.mean(losses)))
        log.debug("epoch %d mean loss %.5f", epoch, curve.epoch_means[-1])
        if callback is not None:
            callback(epoch, curve.epoch_means[-1])
    module.eval()
    denoiser.meta.update({"schedule": schedule.to_dict(), "train_config": config.to_dict()})
    return denoiser, curve
