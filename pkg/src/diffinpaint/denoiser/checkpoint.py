"""Versioned binary checkpoint container for :class:`TorchDenoiser`.

Layout::

    8 bytes   magic b"DPNT0001"
    4 bytes   header length L (uint32, little-endian)
    L bytes   UTF-8 JSON header: {"spec": ..., "meta": ..., "arrays": [
                  {"name", "shape", "offset", "nbytes"}, ...]}
    payload   arrays back to back, little-endian float32, C order

Offsets are relative to the start of the payload.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import DataError
from .unet import DenoiserSpec, TorchDenoiser, UNet

MAGIC = b"DPNT0001"
_DTYPE = np.dtype("<f4")


def checkpoint_bytes(denoiser: TorchDenoiser) -> bytes:
    arrays, chunks, offset = [], [], 0
    for name, tensor in denoiser.module.state_dict().items():
        data = tensor.detach().cpu().numpy().astype(_DTYPE, copy=False).tobytes(order="C")
        arrays.append({"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = json.dumps(
        {"spec": denoiser.spec.to_dict(), "meta": denoiser.meta, "arrays": arrays},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header + b"".join(chunks)


def save_checkpoint(denoiser: TorchDenoiser, path) -> str:
    """Write ``denoiser`` to ``path``; returns the SHA-256 of the file."""
    blob = checkpoint_bytes(denoiser)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def parse_checkpoint(blob: bytes) -> TorchDenoiser:
    if len(blob) < 12 or blob[:8] != MAGIC:
        raise DataError("not a denoiser checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", blob[8:12])
    if len(blob) < 12 + hlen:
        raise DataError("truncated checkpoint header")
    try:
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
        spec = DenoiserSpec.from_dict(header["spec"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"corrupt checkpoint header: {exc}") from exc
    payload = memoryview(blob)[12 + hlen:]
    module = UNet(spec)
    state = {}
    for entry in header["arrays"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(payload):
            raise DataError(f"truncated checkpoint payload at {entry['name']}")
        arr = np.frombuffer(payload[start:start + n], dtype=_DTYPE).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.astype(np.float32))
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise DataError(f"checkpoint arrays do not match the stored spec: {exc}") from exc
    return TorchDenoiser(spec, module, header.get("meta", {}))


def load_checkpoint(path) -> TorchDenoiser:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return parse_checkpoint(blob)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
