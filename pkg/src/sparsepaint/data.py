"""Dataset loading and the synthetic toy corpus."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .image import center_crop, load_image, save_image

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm")


class DatasetError(RuntimeError):
    def __init__(self, message: str, files: list[str] | None = None):
        super().__init__(message if not files else f"{message}: {', '.join(files)}")
        self.files = files or []


def list_images(path: str | os.PathLike) -> list[Path]:
    """A single image file, or all netpbm files of a directory sorted by name."""
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise DatasetError(f"no such file or directory: {path}")
    return sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_dataset(path: str | os.PathLike, crop: int | None = None) -> tuple[np.ndarray, list[Path]]:
    """Load images as one ``(count, size, size, k)`` array, centre-cropped to ``crop``."""
    files = list_images(path)
    if not files:
        raise DatasetError(f"no P5/P6 images found in {path}")
    images, bad = [], []
    for f in files:
        try:
            img = load_image(f)
            images.append(center_crop(img, crop) if crop else img)
        except (OSError, ValueError) as exc:
            bad.append(f"{f} ({exc})")
    if bad:
        raise DatasetError("unreadable images", bad)
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise DatasetError(f"images have differing shapes {sorted(shapes)}; pass a crop size")
    return np.stack(images), files


def synthetic_image(rng: np.random.Generator, size: int, channels: int = 1) -> np.ndarray:
    """A linear intensity ramp with one to three constant rectangles on top."""
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    img = np.empty((size, size, channels))
    angle = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-12)
    for c in range(channels):
        lo, hi = np.sort(rng.uniform(0, 1, 2))
        img[:, :, c] = lo + (hi - lo) * ramp
    for _ in range(rng.integers(1, 4)):
        h, w = rng.integers(size // 6, size // 2 + 1, 2)
        top, left = rng.integers(0, size - h + 1), rng.integers(0, size - w + 1)
        img[top : top + h, left : left + w, :] = rng.uniform(0, 1, channels)
    return img


def synthetic_corpus(count: int, size: int = 32, channels: int = 1, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.stack([synthetic_image(rng, size, channels) for _ in range(count)])


def write_corpus(images: np.ndarray, directory: str | os.PathLike, prefix: str = "img") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ext = ".pgm" if images.shape[-1] == 1 else ".ppm"
    paths = []
    for i, img in enumerate(images):
        p = directory / f"{prefix}{i:04d}{ext}"
        save_image(img, p)
        paths.append(p)
    return paths
