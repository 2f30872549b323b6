"""Stochastic mask optimisation: probabilistic sparsification and non-local pixel exchange.

Both methods treat the inpainting method as a black box ``inpaint(img, mask) -> img``
and therefore work with diffusion inpainting as well as with a learned
generator whose random seed has been fixed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diffusion import inpaint_homogeneous
from .image import as_image, as_mask
from .metrics import mae

log = logging.getLogger(__name__)

Inpainter = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SparsificationError(RuntimeError):
    def __init__(self, round_index: int, cause: Exception):
        super().__init__(f"inpainting failed in sparsification round {round_index}: {cause}")
        self.round_index = round_index


@dataclass(frozen=True)
class SparsifyConfig:
    density: float
    candidate_fraction: float = 0.1
    removal_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")
        if not 0.0 < self.removal_fraction <= self.candidate_fraction <= 1.0:
            raise ValueError("need 0 < removal_fraction <= candidate_fraction <= 1")


@dataclass(frozen=True)
class NlpeConfig:
    cycles: int = 5
    candidates_per_swap: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.cycles < 1 or self.candidates_per_swap < 1:
            raise ValueError("cycles and candidates_per_swap must be at least 1")


def target_count(density: float, shape: tuple[int, int]) -> int:
    return int(round(density * shape[0] * shape[1]))


def pixel_error(img: np.ndarray, rec: np.ndarray) -> np.ndarray:
    """Per-pixel absolute error summed over channels, flattened row-major."""
    return np.abs(img - rec).sum(axis=2).ravel()


def probabilistic_sparsification(
    img,
    cfg: SparsifyConfig,
    inpaint: Inpainter = inpaint_homogeneous,
    on_round: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Thin a full mask down to ``round(density * m * n)`` pixels.

    Each round removes a random trial set of ``ceil(p |K|)`` mask pixels,
    inpaints, and puts back the ``ceil((p - q) |K|)`` trial pixels with the
    largest reconstruction error.  At least one pixel is discarded per round,
    and the last round is trimmed so the target count is hit exactly.
    """
    img = as_image(img)
    m, n = img.shape[:2]
    target = target_count(cfg.density, (m, n))
    if target < 1:
        raise ValueError(f"density {cfg.density} leaves no pixel on a {m}x{n} image")
    rng = np.random.default_rng(cfg.seed)
    mask = np.ones(m * n, dtype=bool)
    p, q = cfg.candidate_fraction, cfg.removal_fraction
    rnd = 0
    while (size := int(mask.sum())) > target:
        members = np.flatnonzero(mask)
        n_trial = min(math.ceil(p * size), size)
        n_back = min(math.ceil((p - q) * size), n_trial - 1)
        n_back = max(n_back, n_trial - (size - target))
        trial = np.sort(rng.choice(members, size=n_trial, replace=False))
        mask[trial] = False
        try:
            rec = inpaint(img, mask.reshape(m, n))
        except Exception as exc:
            raise SparsificationError(rnd, exc) from exc
        err = pixel_error(img, rec)[trial]
        # stable sort on descending error keeps the lowest index on ties
        keep = trial[np.argsort(-err, kind="stable")[:n_back]]
        mask[keep] = True
        if on_round is not None:
            on_round(rnd, mask.reshape(m, n).copy())
        rnd += 1
    log.debug("sparsification finished after %d rounds with %d pixels", rnd, target)
    return mask.reshape(m, n)


def nlpe(
    img,
    mask,
    cfg: NlpeConfig = NlpeConfig(),
    inpaint: Inpainter = inpaint_homogeneous,
    on_commit: Callable[[float], None] | None = None,
) -> np.ndarray:
    """Relocate mask pixels to better positions without changing the mask size.

    Runs ``cycles * |mask|`` exchanges.  Each picks a random mask pixel and
    ``candidates_per_swap`` random free pixels, moves the mask pixel to the
    candidate with the lowest MAE, and keeps the move only if it strictly
    lowers the MAE.
    """
    img = as_image(img)
    mask = as_mask(mask).copy()
    m, n = mask.shape
    size = int(mask.sum())
    if size == 0 or size == m * n:
        raise ValueError("NLPE needs a mask that is neither empty nor full")
    rng = np.random.default_rng(cfg.seed)
    flat = mask.ravel()
    best = mae(img, inpaint(img, mask))
    n_cands = min(cfg.candidates_per_swap, m * n - size)

    for _ in range(cfg.cycles * size):
        src = rng.choice(np.flatnonzero(flat))
        cands = np.sort(rng.choice(np.flatnonzero(~flat), size=n_cands, replace=False))
        flat[src] = False
        errors = np.empty(n_cands)
        for i, c in enumerate(cands):
            flat[c] = True
            errors[i] = mae(img, inpaint(img, mask))
            flat[c] = False
        i_best = int(np.argmin(errors))  # first occurrence = lowest index
        if errors[i_best] < best:
            flat[cands[i_best]] = True
            best = errors[i_best]
            if on_commit is not None:
                on_commit(best)
        else:
            flat[src] = True
    return mask
