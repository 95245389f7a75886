"""Raster and raw-tensor file I/O.

Rasters are 8-bit PNG (RGB or grayscale) mapped affinely from [0, 255] to
[-1, 1]. Raw tensors use a small ``TNSR`` container::

    4 bytes  magic b"TNSR"
    1 byte   format version (1)
    4 bytes  rank r (uint32 LE)
    4r bytes dims (uint32 LE each)
    payload  little-endian float32, C order
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, ShapeError

TENSOR_MAGIC = b"TNSR"
TENSOR_VERSION = 1


def load_image(path) -> np.ndarray:
    """Read an 8-bit raster as a float32 ``(C, H, W)`` array in [-1, 1]."""
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode == "1":
                img = img.convert("L")
                mode = "L"
            if mode == "P":
                img = img.convert("RGB")
                mode = "RGB"
            if mode == "RGBA":
                img = img.convert("RGB")
                mode = "RGB"
            if mode not in ("L", "RGB"):
                raise DataError(f"{path}: unsupported raster mode {mode!r} (need 8-bit L or RGB)")
            arr = np.asarray(img, dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    arr = arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)
    return (arr.astype(np.float32) / np.float32(127.5) - np.float32(1.0)).astype(np.float32)


def quantize(x) -> np.ndarray:
    """Map [-1, 1] floats to uint8 with round-half-to-even and clamping."""
    x = np.asarray(x, dtype=np.float64)
    return np.clip(np.rint((x + 1.0) * 127.5), 0, 255).astype(np.uint8)


def save_image(x, path) -> None:
    """Write a ``(C, H, W)`` array (C = 1 or 3) in [-1, 1] as an 8-bit PNG."""
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[0] not in (1, 3):
        raise ShapeError(f"can only save (1|3, H, W) images, got {x.shape}")
    q = quantize(x)
    img = Image.fromarray(q[0], mode="L") if q.shape[0] == 1 else Image.fromarray(q.transpose(1, 2, 0), mode="RGB")
    img.save(path, format="PNG", optimize=False)


def load_mask(path, change_is_white: bool = True) -> np.ndarray:
    """Read a binary raster as an internal ``(H, W)`` mask (1 = known).

    On disk, white (>= 128) marks the region to regenerate when
    ``change_is_white`` is set.
    """
    x = load_image(path)
    white = (x.mean(axis=0) >= 0.0)
    known = ~white if change_is_white else white
    return known.astype(np.float32)


def save_mask(mask, path, change_is_white: bool = True) -> None:
    m = np.asarray(mask).reshape(np.asarray(mask).shape[-2:])
    white = (m == 0) if change_is_white else (m == 1)
    save_image(np.where(white, 1.0, -1.0)[None], path)


def tensor_bytes(x) -> bytes:
    x = np.asarray(x)
    if x.ndim == 0 or 0 in x.shape:
        raise ShapeError("cannot store a 0-dimensional or empty tensor")
    header = TENSOR_MAGIC + struct.pack("<BI", TENSOR_VERSION, x.ndim) + struct.pack(f"<{x.ndim}I", *x.shape)
    return header + np.ascontiguousarray(x, dtype="<f4").tobytes()


def parse_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < 9 or blob[:4] != TENSOR_MAGIC:
        raise DataError("not a TNSR tensor file (bad magic)")
    version, rank = struct.unpack("<BI", blob[4:9])
    if version != TENSOR_VERSION:
        raise DataError(f"unsupported TNSR version {version}")
    if rank == 0:
        raise DataError("0-dimensional tensors are not allowed")
    end = 9 + 4 * rank
    if len(blob) < end:
        raise DataError("truncated TNSR header")
    dims = struct.unpack(f"<{rank}I", blob[9:end])
    if 0 in dims:
        raise DataError("TNSR tensor has an empty dimension")
    n = int(np.prod(dims))
    if len(blob) != end + 4 * n:
        raise DataError(f"TNSR payload has {len(blob) - end} bytes, expected {4 * n}")
    return np.frombuffer(blob, dtype="<f4", count=n, offset=end).reshape(dims).astype(np.float32)


def save_tensor(x, path) -> None:
    Path(path).write_bytes(tensor_bytes(x))


def load_tensor(path) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read tensor {path}: {exc}") from exc
    return parse_tensor(blob)
