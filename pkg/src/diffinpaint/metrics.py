"""PSNR/SSIM, the random-mask inpainting evaluation, and sampler moment checks."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .conditioning import as_mask
from .denoiser.gmm import GaussianMixture
from .errors import ConfigurationError, DiffInpaintError, ShapeError
from .inpaint import concat_inpaint, repaint_inpaint
from .io import quantize as quantize_8bit
from .rng import SeedLike, as_generator, as_seed_sequence
from .training import synth_mask

PSNR_CONVENTION = "images rescaled from [-1, 1] to [0, 1]; data_range = 1.0"
QUANTIZED_CONVENTION = PSNR_CONVENTION + "; both images quantized to 8 bits first"


def psnr(a, b, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical inputs."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if data_range <= 0:
        raise ConfigurationError("data_range must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-0.5 * (r / sigma) ** 2)
    return w / w.sum()


def ssim_map(a, b, data_range=1.0, win_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Per-pixel SSIM of two 2-D images over the valid window region."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    w = gaussian_window(win_size, sigma)

    def filt(img):
        out = ndimage.correlate1d(img, w, axis=0, mode="reflect")
        return ndimage.correlate1d(out, w, axis=1, mode="reflect")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    pad = (win_size - 1) // 2
    return (num / den)[pad:a.shape[0] - pad, pad:a.shape[1] - pad]


def ssim(a, b, data_range: float = 1.0, win_size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity with a Gaussian window.

    Accepts ``(H, W)`` or ``(C, H, W)`` images; channels are scored separately
    and averaged. Border pixels closer than half a window to the edge are
    excluded.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ShapeError(f"expected (H, W) or (C, H, W), got {a.shape}")
    if min(a.shape[-2:]) < win_size:
        raise ShapeError(f"image {a.shape[-2:]} smaller than the {win_size}x{win_size} window")
    return float(np.mean([ssim_map(ca, cb, data_range, win_size, sigma, k1, k2).mean()
                          for ca, cb in zip(a, b)]))


def to_unit_range(x, quantize: bool = False):
    """Map [-1, 1] to [0, 1], optionally through the 8-bit raster levels."""
    if quantize:
        return quantize_8bit(x).astype(np.float64) / 255.0
    return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0


def masked_psnr(a, b, mask, data_range: float = 1.0):
    """PSNR restricted to the unknown (mask == 0) pixels; None if there are none."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    sel = np.broadcast_to(as_mask(mask, a.shape) == 0, a.shape)
    if not sel.any():
        return None
    return psnr(a[sel], b[sel], data_range)


def mean_fill(x_known, mask):
    """Fill unknown pixels with the per-channel mean of the known pixels."""
    x = np.asarray(x_known, dtype=np.float64)
    m = np.broadcast_to(as_mask(mask, x.shape), x.shape).astype(bool)
    out = x.copy()
    for c in range(x.shape[-3]):
        known = m[..., c, :, :]
        fill = x[..., c, :, :][known].mean() if known.any() else 0.0
        out[..., c, :, :][~known] = fill
    return out.astype(np.asarray(x_known).dtype)


@dataclass
class EvalReport:
    items: list
    ssim_mean: float
    ssim_std: float
    psnr_mean: float | None
    psnr_std: float | None
    n_infinite_psnr: int
    masked_psnr_mean: float | None
    baseline_masked_psnr_mean: float | None
    config: dict = field(default_factory=dict)

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "ssim", "psnr_db"])
            for it in self.items:
                w.writerow([it["id"], repr(it["ssim"]), "inf" if it["psnr_db"] is None else repr(it["psnr_db"])])


def _finite(v):
    return v if v is not None and math.isfinite(v) else None


def _mean_std(values):
    values = [v for v in values if v is not None and math.isfinite(v)]
    if not values:
        return None, None
    return float(np.mean(values)), float(np.std(values))


def evaluate_inpainting(denoiser, dataset, schedule, masks=None, mask_kind: str = "rectangles",
                        coverage: float = 0.25, variant: str = "repaint", rng: SeedLike = 0,
                        batch_size: int = 64, clip_x0: float | None = None,
                        quantize: bool = True) -> EvalReport:
    """Mask each clean image, inpaint it, and score it against the original.

    Masks are synthesized from ``rng`` unless ``masks`` is given. SSIM and PSNR
    are computed on the full image in [0, 1] range; PSNR over the inpainted
    region alone is reported next to a mean-fill baseline. With ``quantize``
    (the default) every image is scored as the 8-bit raster it would be saved
    as, so exact recoveries report infinite PSNR despite float rounding.
    """
    images = np.stack([np.asarray(x, dtype=np.float32) for x in dataset]) if len(dataset) else None
    if images is None:
        raise ConfigurationError("evaluation dataset is empty")
    if variant not in ("repaint", "concat"):
        raise ConfigurationError(f"unknown variant {variant!r}")
    ss = as_seed_sequence(rng)
    mask_ss, run_ss = ss.spawn(2)
    mask_rng = as_generator(mask_ss)
    n, H, W = images.shape[0], images.shape[-2], images.shape[-1]
    explicit = masks is not None
    if not explicit:
        masks = np.stack([synth_mask((H, W), mask_kind, coverage, mask_rng) for _ in range(n)])
    else:
        masks = np.stack([np.asarray(m, dtype=np.float32).reshape(H, W) for m in masks])
        if masks.shape[0] != n:
            raise ShapeError(f"{masks.shape[0]} masks for {n} images")
    masks = masks[:, None]
    run = concat_inpaint if variant == "concat" else repaint_inpaint
    outputs = []
    for chunk, seed in zip(range(0, n, batch_size), run_ss.spawn((n + batch_size - 1) // batch_size)):
        sl = slice(chunk, chunk + batch_size)
        try:
            outputs.append(run(images[sl], masks[sl], denoiser, schedule, seed, clip_x0=clip_x0))
        except DiffInpaintError as exc:
            raise type(exc)(f"inpainting failed for items {chunk}..{min(n, chunk + batch_size) - 1}: {exc}") from exc
    outputs = np.concatenate(outputs)

    items = []
    for i in range(n):
        ref, out, m = to_unit_range(images[i], quantize), to_unit_range(outputs[i], quantize), masks[i]
        p = psnr(ref, out, 1.0)
        items.append({
            "id": i,
            "ssim": ssim(ref, out, 1.0),
            "psnr_db": None if math.isinf(p) else p,
            "masked_psnr_db": _finite(masked_psnr(ref, out, m)),
            "baseline_masked_psnr_db": _finite(masked_psnr(ref, to_unit_range(mean_fill(images[i], m), quantize), m)),
            "unknown_fraction": float(1.0 - m.mean()),
        })
    ssim_mean, ssim_std = _mean_std([it["ssim"] for it in items])
    psnr_mean, psnr_std = _mean_std([it["psnr_db"] for it in items])
    return EvalReport(
        items=items,
        ssim_mean=ssim_mean,
        ssim_std=ssim_std,
        psnr_mean=psnr_mean,
        psnr_std=psnr_std,
        n_infinite_psnr=sum(it["psnr_db"] is None for it in items),
        masked_psnr_mean=_mean_std([it["masked_psnr_db"] for it in items])[0],
        baseline_masked_psnr_mean=_mean_std([it["baseline_masked_psnr_db"] for it in items])[0],
        config={
            "variant": variant,
            "mask_kind": "explicit" if explicit else mask_kind,
            "coverage": None if explicit else coverage,
            "seed": int(ss.entropy) if isinstance(ss.entropy, int) else None,
            "schedule": schedule.to_dict(),
            "clip_x0": clip_x0,
            "metric_convention": QUANTIZED_CONVENTION if quantize else PSNR_CONVENTION,
            "ssim": {"window": 11, "sigma": 1.5, "k1": 0.01, "k2": 0.03, "region": "full image"},
        },
    )


@dataclass
class MomentReport:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    counts: np.ndarray
    weight_dev: np.ndarray
    mean_dev: np.ndarray
    std_dev: np.ndarray
    weight_se: np.ndarray
    mean_se: np.ndarray
    std_se: np.ndarray
    n_sigma: float = 3.0

    @property
    def flags(self) -> dict:
        k = self.n_sigma
        return {
            "weights": np.abs(self.weight_dev) > k * self.weight_se,
            "means": ~(np.abs(self.mean_dev) <= k * self.mean_se),
            "stds": ~(np.abs(self.std_dev) <= k * self.std_se),
        }

    @property
    def ok(self) -> bool:
        return not any(f.any() for f in self.flags.values())


def moment_report(samples, reference: GaussianMixture, min_samples: int = 1000, n_sigma: float = 3.0) -> MomentReport:
    """Compare samples with a reference mixture by nearest-mean assignment.

    Each draw (a scalar for per-pixel mixtures, a ``dim``-vector otherwise) is
    assigned to the closest reference mean; per-component weight, mean and
    (pooled isotropic) std are then compared with the reference, alongside
    their standard errors.
    """
    rows = reference.rows(np.asarray(samples, dtype=np.float64))
    n = rows.shape[0]
    if n < min_samples:
        raise ConfigurationError(f"need at least {min_samples} samples, got {n}")
    d2 = ((rows[:, None, :] - reference.means[None]) ** 2).sum(-1)
    assign = d2.argmin(1)
    K, D = reference.n_components, reference.dim
    counts = np.bincount(assign, minlength=K)
    weights = counts / n
    means = np.full((K, D), np.nan)
    stds = np.full(K, np.nan)
    for k in range(K):
        if counts[k]:
            sel = rows[assign == k]
            means[k] = sel.mean(0)
            stds[k] = np.sqrt(((sel - means[k]) ** 2).mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        weight_se = np.sqrt(reference.weights * (1 - reference.weights) / n)
        mean_se = reference.stds / np.sqrt(counts * D)
        std_se = reference.stds / np.sqrt(2 * counts * D)
    mean_dev = np.sqrt(((means - reference.means) ** 2).mean(1))
    return MomentReport(
        weights=weights, means=means.squeeze(1) if D == 1 else means, stds=stds, counts=counts,
        weight_dev=weights - reference.weights, mean_dev=mean_dev, std_dev=stds - reference.stds,
        weight_se=weight_se, mean_se=mean_se, std_se=std_se, n_sigma=n_sigma,
    )
