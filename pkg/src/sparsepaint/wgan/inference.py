"""Applying a trained checkpoint to single images."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, no_grad
from ..image import DimensionError, as_image, as_mask
from .networks import apply_inpainting_constraint
from .training import Checkpoint


def _batch(ckpt: Checkpoint, img) -> np.ndarray:
    img = as_image(img)
    cfg = ckpt.net_config
    if img.shape != (cfg.image_size, cfg.image_size, cfg.channels):
        raise DimensionError(
            f"image of shape {img.shape} does not match the checkpoint "
            f"({cfg.image_size}x{cfg.image_size}x{cfg.channels})"
        )
    return np.ascontiguousarray(img.astype(np.float32).transpose(2, 0, 1)[None])


def generate_mask(ckpt: Checkpoint, img, seed: int = 0) -> np.ndarray:
    """Binary ``(m, n)`` mask from the mask generator; deterministic for a given seed."""
    f = _batch(ckpt, img)
    rng = np.random.default_rng(seed)
    with no_grad():
        b = ckpt.networks().m(Tensor(rng.random(f.shape, dtype=np.float32)), Tensor(f), rng)
    return b.data[0, 0] > 0.5


def inpaint_learned(ckpt: Checkpoint, img, mask, seed: int = 0) -> np.ndarray:
    """Generator reconstruction blended so that known pixels are copied verbatim."""
    img = as_image(img)
    mask = as_mask(mask)
    if mask.shape != img.shape[:2]:
        raise DimensionError(f"mask {mask.shape} does not match image {img.shape[:2]}")
    f = _batch(ckpt, img)
    b = mask.astype(np.float32)[None, None]
    rng = np.random.default_rng(seed)
    with no_grad():
        ft, bt = Tensor(f), Tensor(b)
        g = ckpt.networks().g(Tensor(rng.random(f.shape, dtype=np.float32)), bt, bt * ft)
        u = apply_inpainting_constraint(g, bt, ft).data[0].transpose(1, 2, 0).astype(np.float64)
    # the network runs in float32; restore the exact float64 input at known pixels
    return np.where(mask[:, :, None], img, np.clip(u, 0.0, 1.0))


def learned_inpainter(ckpt: Checkpoint, seed: int = 0):
    """A deterministic ``inpaint(img, mask)`` handle usable by the stochastic optimisers."""

    def inpaint(img, mask):
        return inpaint_learned(ckpt, img, mask, seed)

    return inpaint
