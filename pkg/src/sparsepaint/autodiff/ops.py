"""Differentiable image operators on ``(batch, channels, height, width)`` tensors."""

from __future__ import annotations

import contextlib
import enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor, make_node


class DimensionError(ValueError):
    pass


def spacing(dilation: int) -> int:
    """Tap spacing for a dilation rate; rate 0 denotes an ordinary convolution."""
    return max(1, int(dilation))


def same_padding(kernel: int, dilation: int) -> int:
    return spacing(dilation) * (kernel - 1) // 2


def _im2col(x: np.ndarray, k: int, sp: int, stride: int, pad: int) -> tuple[np.ndarray, int, int]:
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    eff = sp * (k - 1) + 1
    Ho = (H + 2 * pad - eff) // stride + 1
    Wo = (W + 2 * pad - eff) // stride + 1
    win = sliding_window_view(xp, (eff, eff), axis=(2, 3))[:, :, ::stride, ::stride, ::sp, ::sp]
    win = win[:, :, :Ho, :Wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * k * k)
    return cols, Ho, Wo


def _col2im(
    dcols: np.ndarray, x_shape: tuple[int, ...], k: int, sp: int, stride: int, pad: int, Ho: int, Wo: int
) -> np.ndarray:
    B, C, H, W = x_shape
    d6 = dcols.reshape(B, Ho, Wo, C, k, k).transpose(0, 3, 1, 2, 4, 5)
    dxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=dcols.dtype)
    h_span = stride * (Ho - 1) + 1
    w_span = stride * (Wo - 1) + 1
    for i in range(k):
        for j in range(k):
            dxp[:, :, i * sp : i * sp + h_span : stride, j * sp : j * sp + w_span : stride] += d6[..., i, j]
    return dxp[:, :, pad : pad + H, pad : pad + W]


def _from_rows(rows: np.ndarray, B: int, Ho: int, Wo: int) -> np.ndarray:
    return np.ascontiguousarray(rows.reshape(B, Ho, Wo, -1).transpose(0, 3, 1, 2))


def _to_rows(g: np.ndarray) -> np.ndarray:
    return g.transpose(0, 2, 3, 1).reshape(-1, g.shape[1])


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 0, stride: int = 1) -> Tensor:
    """Cross-correlation with an ``(out, in, k, k)`` kernel and zero padding ``sp * (k - 1) / 2``.

    At stride 1 the spatial size is preserved.
    """
    x, w = as_tensor(x), as_tensor(w)
    O, C, k, _ = w.shape
    if x.shape[1] != C:
        raise DimensionError(f"conv2d expects {C} input channels, got {x.shape[1]}")
    sp = spacing(dilation)
    pad = same_padding(k, dilation)
    B = x.shape[0]
    cols, Ho, Wo = _im2col(x.data, k, sp, stride, pad)
    w2 = w.data.reshape(O, C * k * k)
    rows = cols @ w2.T
    if b is not None:
        rows = rows + b.data
    out = _from_rows(rows, B, Ho, Wo)

    def backward(g):
        g2 = _to_rows(g)
        gx = _col2im(g2 @ w2, x.shape, k, sp, stride, pad, Ho, Wo) if x.requires_grad else None
        gw = (g2.T @ cols).reshape(w.shape) if w.requires_grad else None
        grads = [gx, gw]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return grads

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, backward, "conv2d")


def tconv2d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 0) -> Tensor:
    """Stride-1 transposed convolution with an ``(in, out, k, k)`` kernel.

    This is the adjoint of :func:`conv2d` with the same kernel:
    ``<conv2d(x, w), y> == <x, tconv2d(y, w)>``.
    """
    x, w = as_tensor(x), as_tensor(w)
    Ci, Co, k, _ = w.shape
    if x.shape[1] != Ci:
        raise DimensionError(f"tconv2d expects {Ci} input channels, got {x.shape[1]}")
    sp = spacing(dilation)
    pad = same_padding(k, dilation)
    B, _, H, W = x.shape
    w2 = w.data.reshape(Ci, Co * k * k)
    out_shape = (B, Co, H, W)
    x_rows = _to_rows(x.data)
    out = _col2im(x_rows @ w2, out_shape, k, sp, 1, pad, H, W)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def backward(g):
        gcols, _, _ = _im2col(g, k, sp, 1, pad)
        gx = _from_rows(gcols @ w2.T, B, H, W) if x.requires_grad else None
        gw = (x_rows.T @ gcols).reshape(w.shape) if w.requires_grad else None
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, backward, "tconv2d")


def maxpool2x2(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise DimensionError(f"max-pooling needs even spatial dimensions, got {H}x{W}")
    blocks = x.data.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // 2, W // 2, 4)
    arg = blocks.argmax(axis=-1)  # first maximum wins ties
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        return (gb.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W),)

    return make_node(out, (x,), backward, "maxpool2x2")


def upsample2x2(x: Tensor) -> Tensor:
    """Nearest-neighbour upsampling by a factor of two."""
    B, C, H, W = x.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    return make_node(
        out, (x,), lambda g: (g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)),), "upsample2x2"
    )


def elu(x: Tensor) -> Tensor:
    pos = x.data > 0
    out = np.where(pos, x.data, np.expm1(np.minimum(x.data, 0)))
    return make_node(out, (x,), lambda g: (g * np.where(pos, 1, out + 1).astype(g.dtype),), "elu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data > 0
    out = np.where(pos, x.data, slope * x.data).astype(x.dtype)
    return make_node(out, (x,), lambda g: (g * np.where(pos, 1, slope).astype(g.dtype),), "leaky_relu")


def hard_sigmoid(x: Tensor) -> Tensor:
    """``clamp(0.2 x + 0.5, 0, 1)``; slope 0.2 on the closed interval [-2.5, 2.5]."""
    out = np.clip(0.2 * x.data + 0.5, 0.0, 1.0).astype(x.dtype)
    inside = np.abs(x.data) <= 2.5
    return make_node(out, (x,), lambda g: (g * np.where(inside, 0.2, 0.0).astype(g.dtype),), "hard_sigmoid")


class BinarizationMode(str, enum.Enum):
    ADDITIVE_NOISE = "additive_noise"
    STOCHASTIC_ROUNDING = "stochastic_rounding"
    HARD_ROUNDING = "hard_rounding"


_surrogate = False


@contextlib.contextmanager
def straight_through_surrogate():
    """Within this block straight-through operators forward as the identity.

    Used by gradient checking so that finite differences see the same linear
    surrogate the backward pass uses.
    """
    global _surrogate
    prev, _surrogate = _surrogate, True
    try:
        yield
    finally:
        _surrogate = prev


def binarize(
    c: Tensor,
    mode: BinarizationMode | str = BinarizationMode.HARD_ROUNDING,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Quantise confidences in [0, 1] to {0, 1}; the backward pass is the identity."""
    c = as_tensor(c)
    mode = BinarizationMode(mode)
    x = c.data
    if x.size and (x.min() < 0.0 or x.max() > 1.0 or not np.isfinite(x).all()):
        raise ValueError("binarize expects values in [0, 1]")
    if _surrogate:
        out = x.copy()
    elif mode is BinarizationMode.HARD_ROUNDING:
        out = np.floor(x + 0.5)
    elif mode is BinarizationMode.STOCHASTIC_ROUNDING:
        if rng is None:
            raise ValueError("stochastic rounding needs an explicit random generator")
        frac = x - np.floor(x)
        out = np.floor(x) + (rng.random(x.shape) < frac)
    else:
        if rng is None:
            raise ValueError("additive noise needs an explicit random generator")
        # rounded afterwards so the mask path always receives binary data
        out = np.floor(x + rng.uniform(0.0, 0.5, size=x.shape) + 0.5)
    out = np.clip(out, 0.0, 1.0).astype(x.dtype)
    node = make_node(out, (c,), lambda g: (g,), "binarize")
    node.straight_through = True
    return node
