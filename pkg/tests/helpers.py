"""Builders shared by the pipeline, CLI and acceptance tests."""
import numpy as np
from PIL import Image

from diffinpaint.denoiser import DenoiserSpec, make_trainable_denoiser, save_checkpoint


def write_corpus(root, n=3, size=16, seed=0, channels=3):
    """``<root>/<id>/image.png`` + ``mask.png`` entries (white = change)."""
    rng = np.random.default_rng(seed)
    for i in range(n):
        d = root / f"scene{i}"
        d.mkdir(parents=True)
        shape = (size, size, 3) if channels == 3 else (size, size)
        Image.fromarray(rng.integers(0, 256, shape, dtype=np.uint8)).save(d / "image.png")
        mask = np.zeros((size, size), np.uint8)
        r, c = rng.integers(0, size // 2, 2)
        mask[r:r + size // 3, c:c + size // 3] = 255
        Image.fromarray(mask).save(d / "mask.png")
    return root


def write_tiny_checkpoint(path, channels=3, conditional=False, T=8, seed=0):
    spec = DenoiserSpec(channels, 4, (1, 2), conditional=conditional, norm_groups=2, zero_init_output=False)
    d = make_trainable_denoiser(spec, seed)
    d.meta["schedule"] = {"kind": "linear", "T": T, "beta_start": 0.05, "beta_end": 0.5, "variance": "beta"}
    save_checkpoint(d, path)
    return path
