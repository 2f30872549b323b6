"""Joint training of inpainting generator, mask generator and critic."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from ..autodiff import Adam, Tensor, no_grad, weight_normalize
from . import checkpoint as ckpt_io
from .losses import density, discriminator_loss, generator_loss, mask_loss
from .networks import (
    Discriminator,
    Generator,
    MaskGenerator,
    NetConfig,
    apply_inpainting_constraint,
)

log = logging.getLogger(__name__)

MODES = ("joint", "random-mask")


@dataclass
class TrainConfig:
    density: float = 0.1
    alpha: float = 0.005
    beta: float = 1.0
    lr: float = 5e-5
    batch: int = 32
    epochs: int = 1000
    n_critic: int = 1
    seed: int = 0
    val_fraction: float = 0.1
    mode: str = "joint"
    density_range: tuple[float, float] = (0.05, 0.2)
    # MAE terms divided by N = m*n*k; False uses the plain 1-norm
    normalize_mae: bool = True
    # density measured against m*n*k instead of m*n
    density_over_channels: bool = False

    def __post_init__(self):
        self.density_range = tuple(float(v) for v in self.density_range)
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not 0 < self.density <= 1:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")
        lo, hi = self.density_range
        if not 0 < lo <= hi <= 1:
            raise ValueError(f"density_range must satisfy 0 < lo <= hi <= 1, got {self.density_range}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.batch < 1 or self.epochs < 0 or self.n_critic < 1 or self.lr <= 0:
            raise ValueError("batch, n_critic and lr must be positive and epochs non-negative")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["density_range"] = list(self.density_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class EpochLog:
    epoch: int
    d_loss: float
    g_loss: float
    m_loss: float
    val_mask_loss: float
    density: float


LOG_COLUMNS = ("epoch", "d_loss", "g_loss", "m_loss", "val_mask_loss", "density")


class Triad:
    """The three networks built from one shared :class:`NetConfig`."""

    def __init__(self, cfg: NetConfig, seed: int | np.random.SeedSequence = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.g = Generator(cfg, rng, dtype)
        self.m = MaskGenerator(cfg, rng, dtype)
        self.d = Discriminator(cfg, rng, dtype)

    @property
    def nets(self):
        return (self.g, self.m, self.d)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for net in self.nets for name, p in net.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for net in self.nets:
            net.load_arrays(arrays)

    def normalize_critic(self) -> list[tuple[str, int]]:
        return weight_normalize(self.d.params, self.d.filters)


@dataclass
class Checkpoint:
    net_config: NetConfig
    train_config: TrainConfig
    params: dict[str, np.ndarray]
    epoch: int
    val_loss: float
    history: list[EpochLog] = field(default_factory=list)
    _triad: Triad | None = field(default=None, repr=False, compare=False)

    def networks(self) -> Triad:
        if self._triad is None:
            triad = Triad(self.net_config)
            triad.load_arrays(self.params)
            self._triad = triad
        return self._triad

    def metadata(self) -> dict:
        return {
            "net_config": self.net_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "epoch": self.epoch,
            "val_loss": self.val_loss,
        }

    def to_bytes(self) -> bytes:
        return ckpt_io.encode(self.metadata(), self.params)

    def save(self, path: str | os.PathLike) -> None:
        ckpt_io.write(path, self.metadata(), self.params)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Checkpoint":
        meta, tensors = ckpt_io.read(path)
        try:
            return cls(
                NetConfig(**meta["net_config"]),
                TrainConfig.from_dict(meta["train_config"]),
                tensors,
                int(meta["epoch"]),
                float(meta["val_loss"]),
            )
        except KeyError as exc:
            raise ckpt_io.CheckpointFormatError(f"missing metadata key {exc}") from None


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int, stage: str, last: Checkpoint):
        super().__init__(f"non-finite {stage} loss at epoch {epoch}, batch {batch}")
        self.epoch, self.batch, self.stage = epoch, batch, stage
        self.last_checkpoint = last


def to_nchw(images: np.ndarray) -> np.ndarray:
    """``(count, m, n, k)`` images to a float32 ``(count, k, m, n)`` batch."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim == 3:
        images = images[..., None]
    return np.ascontiguousarray(images.transpose(0, 3, 1, 2))


def split_dataset(images: np.ndarray, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/validation split; tiny sets validate on the training data."""
    n = images.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    perm = np.random.default_rng([cfg.seed, 1]).permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    if n_val == 0 or n_val >= n:
        return images, images
    return images[perm[n_val:]], images[perm[:n_val]]


def random_masks(rng: np.random.Generator, count: int, size: tuple[int, int], density_range) -> np.ndarray:
    """i.i.d. coin-flip masks, one density drawn uniformly from ``density_range`` per sample."""
    lo, hi = density_range
    p = rng.uniform(lo, hi, size=count)
    return (rng.random((count, 1) + tuple(size)) < p[:, None, None, None]).astype(np.float32)


def _finite(value: float) -> bool:
    return math.isfinite(value)


def _forward_u(triad: Triad, seed_g: Tensor, b: Tensor, f: Tensor) -> Tensor:
    return apply_inpainting_constraint(triad.g(seed_g, b, b * f), b, f)


def validation_loss(triad: Triad, val: np.ndarray, cfg: TrainConfig) -> tuple[float, float]:
    """Mask loss and mean mask density on ``val`` (an NCHW batch) with fixed seeds."""
    rng = np.random.default_rng([cfg.seed, 2])
    total = dens = 0.0
    with no_grad():
        for start in range(0, val.shape[0], cfg.batch):
            f = Tensor(val[start : start + cfg.batch])
            B = f.shape[0]
            seed_m = Tensor(rng.random(f.shape, dtype=np.float32))
            seed_g = Tensor(rng.random(f.shape, dtype=np.float32))
            if cfg.mode == "joint":
                b = triad.m(seed_m, f, rng)
            else:
                b = Tensor(random_masks(rng, B, f.shape[2:], cfg.density_range))
            u = _forward_u(triad, seed_g, b, f)
            loss = mask_loss(b, u, f, cfg.density, cfg.beta, cfg.normalize_mae, cfg.density_over_channels)
            total += float(loss.data) * B
            dens += float(density(b).data.sum())
    n = val.shape[0]
    return total / n, dens / n


StepHook = Callable[[str, Triad], None]


def train(
    images: np.ndarray,
    cfg: TrainConfig,
    net_cfg: NetConfig,
    on_step: StepHook | None = None,
) -> Checkpoint:
    """Train and return the checkpoint with the lowest validation mask loss.

    Per batch the critic takes ``n_critic`` steps (each followed by filter
    normalisation), then the generator one step and, in joint mode, the mask
    generator one step.  Epoch 0 is the untrained initialisation.
    """
    data = to_nchw(images)
    if data.shape[1] != net_cfg.channels or data.shape[2:] != (net_cfg.image_size,) * 2:
        raise ValueError(f"dataset shape {data.shape[1:]} does not match the network configuration")
    train_set, val_set = split_dataset(data, cfg)
    ss_init, ss_shuffle, ss_noise = np.random.SeedSequence(cfg.seed).spawn(3)
    triad = Triad(net_cfg, ss_init)
    triad.normalize_critic()
    shuffle_rng = np.random.default_rng(ss_shuffle)
    noise_rng = np.random.default_rng(ss_noise)
    joint = cfg.mode == "joint"

    opt_g = Adam(triad.g.params, cfg.lr)
    opt_m = Adam(triad.m.params, cfg.lr)
    opt_d = Adam(triad.d.params, cfg.lr)

    val_loss, val_density = validation_loss(triad, val_set, cfg)
    best = Checkpoint(net_cfg, cfg, triad.arrays(), 0, val_loss)
    history: list[EpochLog] = []
    log.info("epoch 0: val mask loss %.5f, density %.4f", val_loss, val_density)

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(train_set.shape[0])
        sums = np.zeros(3)
        n_batches = 0
        for bi, start in enumerate(range(0, len(order), cfg.batch)):
            f = Tensor(train_set[order[start : start + cfg.batch]])
            B = f.shape[0]
            seed_m = Tensor(noise_rng.random(f.shape, dtype=np.float32))
            seed_g = Tensor(noise_rng.random(f.shape, dtype=np.float32))

            # (i) critic
            triad.g.requires_grad_(False)
            triad.m.requires_grad_(False)
            triad.d.requires_grad_(True)
            with no_grad():
                if joint:
                    b = triad.m(seed_m, f, noise_rng)
                else:
                    b = Tensor(random_masks(noise_rng, B, f.shape[2:], cfg.density_range))
                u = _forward_u(triad, seed_g, b, f)
            for _ in range(cfg.n_critic):
                triad.d.zero_grad()
                d_loss = discriminator_loss(triad.d, u, f, b)
                if not _finite(float(d_loss.data)):
                    raise TrainingDivergedError(epoch, bi, "critic", best)
                d_loss.backward()
                opt_d.step()
                triad.normalize_critic()
                if on_step:
                    on_step("critic", triad)

            # (ii) inpainting generator
            triad.d.requires_grad_(False)
            triad.g.requires_grad_(True)
            triad.g.zero_grad()
            u = _forward_u(triad, seed_g, b, f)
            g_loss = generator_loss(triad.d, u, f, b, cfg.alpha, cfg.normalize_mae)
            if not _finite(float(g_loss.data)):
                raise TrainingDivergedError(epoch, bi, "generator", best)
            g_loss.backward()
            opt_g.step()
            if on_step:
                on_step("generator", triad)

            # (iii) mask generator
            m_value = 0.0
            if joint:
                triad.g.requires_grad_(False)
                triad.m.requires_grad_(True)
                triad.m.zero_grad()
                b = triad.m(seed_m, f, noise_rng)
                u = _forward_u(triad, seed_g, b, f)
                m_loss = mask_loss(b, u, f, cfg.density, cfg.beta, cfg.normalize_mae, cfg.density_over_channels)
                m_value = float(m_loss.data)
                if not _finite(m_value):
                    raise TrainingDivergedError(epoch, bi, "mask", best)
                m_loss.backward()
                opt_m.step()
                if on_step:
                    on_step("mask", triad)

            sums += (float(d_loss.data), float(g_loss.data), m_value)
            n_batches += 1

        for net in triad.nets:
            net.zero_grad()
        val_loss, val_density = validation_loss(triad, val_set, cfg)
        means = sums / max(n_batches, 1)
        history.append(EpochLog(epoch, *means.tolist(), val_loss, val_density))
        log.info(
            "epoch %d: d %.5f g %.5f m %.5f | val mask loss %.5f, density %.4f",
            epoch, *means, val_loss, val_density,
        )
        if not _finite(val_loss):
            raise TrainingDivergedError(epoch, n_batches, "validation", best)
        if val_loss < best.val_loss:
            best = Checkpoint(net_cfg, cfg, triad.arrays(), epoch, val_loss)

    best.history = history
    return best


def train_joint(images, cfg: TrainConfig, net_cfg: NetConfig, on_step: StepHook | None = None) -> Checkpoint:
    if cfg.mode != "joint":
        raise ValueError("train_joint needs mode='joint'")
    return train(images, cfg, net_cfg, on_step)


def train_inpainting_random_masks(
    images, cfg: TrainConfig, net_cfg: NetConfig, density_range=None, on_step: StepHook | None = None
) -> Checkpoint:
    """Train generator and critic only, on random masks; the mask generator stays untouched."""
    d = cfg.to_dict()
    d["mode"] = "random-mask"
    if density_range is not None:
        d["density_range"] = list(density_range)
    return train(images, TrainConfig.from_dict(d), net_cfg, on_step)


def write_loss_csv(history: list[EpochLog], path: str | os.PathLike) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for row in history:
            w.writerow([row.epoch] + [repr(float(getattr(row, c))) for c in LOG_COLUMNS[1:]])
