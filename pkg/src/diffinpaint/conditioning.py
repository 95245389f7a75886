"""Mask validation and channel-stacking shared by the inpainting variants."""
import numpy as np

from .errors import MaskError, ShapeError


def as_mask(mask, image_shape):
    """Validate ``mask`` against an image and return it broadcastable to it.

    Accepted mask shapes are ``(H, W)``, ``(1, H, W)`` and, for batched images
    ``(N, C, H, W)``, also ``(N, H, W)`` and ``(N, 1, H, W)``. The returned array
    has a singleton channel axis. 1 marks a known pixel, 0 a pixel to inpaint.
    """
    m = np.asarray(mask)
    image_shape = tuple(image_shape)
    if len(image_shape) not in (3, 4):
        raise ShapeError(f"images must be (C, H, W) or (N, C, H, W), got {image_shape}")
    hw = image_shape[-2:]
    if m.shape[-2:] != hw:
        raise ShapeError(f"mask spatial shape {m.shape[-2:]} does not match image {hw}")
    if m.ndim == 2:
        m = m[None]
    elif m.ndim == 3 and len(image_shape) == 4 and m.shape[0] == image_shape[0] and m.shape[0] != 1:
        m = m[:, None]
    elif m.ndim == 3 and m.shape[0] != 1:
        raise ShapeError(f"mask must have a single channel, got shape {m.shape}")
    elif m.ndim == 4 and (len(image_shape) != 4 or m.shape[1] != 1 or m.shape[0] not in (1, image_shape[0])):
        raise ShapeError(f"mask shape {m.shape} incompatible with image {image_shape}")
    elif m.ndim > 4:
        raise ShapeError(f"mask shape {m.shape} has too many axes")
    if not np.all((m == 0) | (m == 1)):
        raise MaskError("mask values must be exactly 0 or 1")
    return m


def concat_condition(x_t, x_known, mask):
    """Stack ``[x_t, x_known * mask, mask]`` along the channel axis.

    The output has ``2C + 1`` channels; the middle slice is zero wherever the
    mask marks an unknown pixel.
    """
    x_t, x_known = np.asarray(x_t), np.asarray(x_known)
    if x_t.shape != x_known.shape:
        raise ShapeError(f"x_t {x_t.shape} and x_known {x_known.shape} differ")
    m = as_mask(mask, x_t.shape).astype(x_t.dtype, copy=False)
    m = np.broadcast_to(m, x_t.shape[:-3] + (1,) + x_t.shape[-2:])
    return np.concatenate([x_t, x_known * m, m], axis=-3)
