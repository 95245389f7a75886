"""Synthetic change-detection pairs: regenerate a masked region of a real image.

Input corpus layout::

    <input_dir>/<id>/image.png
    <input_dir>/<id>/mask.png     white = change region

Output layout (format version 1)::

    <output_dir>/manifest.json
    <output_dir>/pairs/<id>/a.png     original
    <output_dir>/pairs/<id>/b.png     original with the change region inpainted
    <output_dir>/pairs/<id>/mask.png  copy of the change mask (white = change)
"""
from __future__ import annotations

import hashlib
import json
import shutil
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conditioning import as_mask
from .denoiser.checkpoint import checkpoint_bytes, load_checkpoint
from .denoiser.gmm import GMMOracleDenoiser
from .diffusion import build_schedule
from .errors import ConfigurationError, DataError, DiffInpaintError, ShapeError
from .inpaint import concat_inpaint, repaint_inpaint
from .io import load_image, load_mask, save_image, save_mask
from .rng import derive_seed

MANIFEST_VERSION = 1


@dataclass
class ChangePair:
    image_a: np.ndarray
    image_b: np.ndarray
    mask: np.ndarray  # 1 = unchanged, 0 = change region
    provenance: dict = field(default_factory=dict)


def denoiser_fingerprint(denoiser) -> str:
    if isinstance(denoiser, GMMOracleDenoiser):
        blob = json.dumps(denoiser.gmm.to_dict(), sort_keys=True).encode()
        return "gmm-oracle:" + hashlib.sha256(blob).hexdigest()
    if hasattr(denoiser, "module"):
        return "sha256:" + hashlib.sha256(checkpoint_bytes(denoiser)).hexdigest()
    return "unknown:" + type(denoiser).__name__


def generate_change_pair(image, change_mask, denoiser, schedule, seed: int, variant: str = "repaint",
                         fingerprint: str | None = None, clip_x0: float | None = None) -> ChangePair:
    """Inpaint the change region (mask == 0) of ``image``.

    ``change_mask`` uses the internal polarity: 1 keeps the original pixel,
    0 marks the region to replace with generated content.
    """
    image = np.asarray(image, dtype=np.float32)
    m = as_mask(change_mask, image.shape)[0].astype(np.float32)
    if variant == "repaint":
        b = repaint_inpaint(image, m, denoiser, schedule, seed, clip_x0=clip_x0)
    elif variant == "concat":
        b = concat_inpaint(image, m, denoiser, schedule, seed, clip_x0=clip_x0)
    else:
        raise ConfigurationError(f"unknown variant {variant!r}")
    provenance = {
        "seed": int(seed),
        "schedule": schedule.to_dict(),
        "checkpoint": fingerprint or denoiser_fingerprint(denoiser),
        "variant": variant,
        "clip_x0": clip_x0,
    }
    return ChangePair(image, b, m, provenance)


def _schedule_for(denoiser, config):
    stored = getattr(denoiser, "meta", {}).get("schedule", {})
    if isinstance(denoiser, GMMOracleDenoiser) and "steps" not in config:
        return denoiser.schedule
    T = int(config.get("steps") or stored.get("T") or 1000)
    kind = config.get("schedule", stored.get("kind", "linear"))
    if T == stored.get("T") and kind == stored.get("kind"):
        return build_schedule(kind, T, stored.get("beta_start"), stored.get("beta_end"),
                              stored.get("variance", "beta"))
    if getattr(getattr(denoiser, "spec", None), "output", "epsilon") == "v":
        raise ConfigurationError("v-output models only run on their training schedule")
    return build_schedule(kind, T)


def _dataset_id(ids, seed, variant, schedule, fingerprint) -> str:
    """Content-derived id, so reruns agree regardless of the output location."""
    blob = json.dumps([ids, seed, variant, schedule.to_dict(), fingerprint], sort_keys=True).encode()
    return "cd-" + hashlib.sha256(blob).hexdigest()[:12]


def scan_corpus(input_dir) -> list[str]:
    root = Path(input_dir)
    if not root.is_dir():
        raise DataError(f"input directory {root} does not exist")
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def _validate(root: Path, ids, data_channels):
    loaded, problems = {}, []
    for id_ in ids:
        img_p, mask_p = root / id_ / "image.png", root / id_ / "mask.png"
        if not img_p.exists() or not mask_p.exists():
            problems.append(f"{id_}: missing image.png or mask.png")
            continue
        try:
            img = load_image(img_p)
            mask = load_mask(mask_p)
        except DataError as exc:
            problems.append(f"{id_}: {exc}")
            continue
        if img.shape[-2:] != mask.shape:
            problems.append(f"{id_}: mask size {mask.shape} does not match image size {img.shape[-2:]}")
            continue
        if data_channels is not None and img.shape[0] != data_channels:
            problems.append(f"{id_}: image has {img.shape[0]} channels, model expects {data_channels}")
            continue
        loaded[id_] = (img, mask)
    if problems:
        raise DataError("invalid change-detection inputs:\n  " + "\n  ".join(problems))
    return loaded


def build_cd_dataset(input_dir, output_dir, config: dict, denoiser=None) -> dict:
    """Generate a change-detection dataset and return its manifest.

    ``config`` keys: ``seed`` (int, default 0), ``steps`` (schedule length),
    ``schedule`` (family), ``variant`` (``repaint`` or ``concat``),
    ``checkpoint`` (path; used when ``denoiser`` is not given), ``dataset_id``
    (defaults to a hash of the ids and generation settings),
    ``clip_x0`` (optional bound on the implied clean image during sampling).
    All inputs are validated before anything is generated; the output is
    assembled in a scratch directory and only moved into place on success.
    """
    config = dict(config)
    if denoiser is None:
        if "checkpoint" not in config:
            raise ConfigurationError("build_cd_dataset needs a denoiser or a 'checkpoint' path")
        denoiser = load_checkpoint(config["checkpoint"])
    seed = int(config.get("seed", 0))
    variant = config.get("variant", "repaint")
    clip_x0 = config.get("clip_x0")
    schedule = _schedule_for(denoiser, config)
    root, out = Path(input_dir), Path(output_dir)
    ids = scan_corpus(root)
    if not ids:
        raise DataError(f"no <id>/image.png entries found in {root}")
    spec = getattr(denoiser, "spec", None)
    loaded = _validate(root, ids, spec.data_channels if spec is not None else None)
    fingerprint = denoiser_fingerprint(denoiser)

    if out.exists() and any(out.iterdir()) and not (out / "manifest.json").exists():
        raise DataError(f"refusing to overwrite non-dataset directory {out}")
    out.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        records = []
        for id_ in ids:
            img, mask = loaded[id_]
            item_seed = derive_seed(seed, zlib.crc32(id_.encode()))
            try:
                pair = generate_change_pair(img, mask, denoiser, schedule, item_seed, variant, fingerprint, clip_x0)
            except (DiffInpaintError, ShapeError) as exc:
                raise type(exc)(f"{id_}: {exc}") from exc
            pair_dir = scratch / "pairs" / id_
            pair_dir.mkdir(parents=True)
            save_image(pair.image_a, pair_dir / "a.png")
            save_image(pair.image_b, pair_dir / "b.png")
            save_mask(pair.mask, pair_dir / "mask.png")
            records.append({
                "id": id_,
                "a": f"pairs/{id_}/a.png",
                "b": f"pairs/{id_}/b.png",
                "mask": f"pairs/{id_}/mask.png",
                "seed": item_seed,
                "change_fraction": float(1.0 - pair.mask.mean()),
            })
        manifest = {
            "format_version": MANIFEST_VERSION,
            "dataset_id": config.get("dataset_id") or _dataset_id(ids, seed, variant, schedule, fingerprint),
            "config": {
                "seed": seed,
                "variant": variant,
                "schedule": schedule.to_dict(),
                "checkpoint": fingerprint,
                "clip_x0": clip_x0,
                "mask_polarity": "white = change region",
            },
            "pairs": records,
        }
        (scratch / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if out.exists():
            shutil.rmtree(out)
        scratch.chmod(0o755)
        scratch.rename(out)
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    return manifest
