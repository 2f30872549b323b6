"""Critic, generator and mask losses, averaged over the batch."""

from __future__ import annotations

from typing import Callable

from ..autodiff import Tensor, tabs, tmean, tsum

Critic = Callable[[Tensor, Tensor], Tensor]


def _check_batch(*tensors: Tensor) -> None:
    n = tensors[0].shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if any(t.shape[0] != n for t in tensors):
        raise ValueError("batch sizes disagree")


def l1_per_sample(f: Tensor, u: Tensor, normalize: bool = True) -> Tensor:
    """``||f - u||_1`` for each sample, divided by N = m*n*k when ``normalize``."""
    if f.shape != u.shape:
        raise ValueError(f"shape mismatch: {f.shape} vs {u.shape}")
    total = tsum(tabs(f - u), axis=(1, 2, 3))
    if normalize:
        total = total * (1.0 / float(f.data[0].size))
    return total


def discriminator_loss(d: Critic, u: Tensor, f: Tensor, mask: Tensor) -> Tensor:
    """Batch mean of ``d(u, mask) - d(f, mask)``."""
    _check_batch(u, f, mask)
    return tmean(d(u, mask) - d(f, mask))


def generator_loss(d: Critic, u: Tensor, f: Tensor, mask: Tensor, alpha: float, normalize: bool = True) -> Tensor:
    """Batch mean of ``-alpha * d(u, mask) + ||f - u||_1 / N``."""
    _check_batch(u, f, mask)
    mae = l1_per_sample(f, u, normalize)
    if alpha == 0:
        return tmean(mae)
    return tmean(d(u, mask) * (-alpha) + mae)


def density(b: Tensor, over_channels: int = 1) -> Tensor:
    """Fraction of known pixels per sample.

    ``over_channels`` > 1 divides by N = m*n*k instead of the spatial size.
    """
    m, n = b.shape[2:]
    return tsum(b, axis=(1, 2, 3)) * (1.0 / float(m * n * b.shape[1] * over_channels))


def mask_loss(
    b: Tensor,
    u: Tensor,
    f: Tensor,
    target_density: float,
    beta: float,
    normalize: bool = True,
    density_over_channels: bool = False,
) -> Tensor:
    """Batch mean of ``| ||b||_1 / (m*n) - D | + beta * ||f - u||_1 / N``."""
    _check_batch(b, u, f)
    over = f.shape[1] if density_over_channels else 1
    dev = tabs(density(b, over) - target_density)
    if beta == 0:
        return tmean(dev)
    return tmean(dev + l1_per_sample(f, u, normalize) * beta)
