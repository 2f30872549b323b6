"""Inpainting generator, mask generator and critic built on the autodiff engine.

Both generators share an hourglass: ``scales`` encoder CBlocks (three
parallel 5x5 convolutions with dilations 0, 2 and 5, ELU, concatenation,
2x2 max-pooling) and ``scales`` decoder TCBlocks (the same with transposed
convolutions and 2x2 upsampling) joined by skip connections.  The deepest
CBlock is the bottleneck and does not pool; the last TCBlock does not
upsample.  Resolution therefore drops by ``2 ** (scales - 1)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..autodiff import (
    BinarizationMode,
    Tensor,
    binarize,
    concat,
    conv2d,
    elu,
    hard_sigmoid,
    leaky_relu,
    maxpool2x2,
    mul,
    tconv2d,
    tmean,
    tsum,
    upsample2x2,
)

KERNEL = 5
DILATIONS = (0, 2, 5)


@dataclass
class NetConfig:
    image_size: int
    channels: int = 1
    scales: int = 4
    base_channels: list[int] = field(default_factory=lambda: [48, 96, 192, 384])
    binarization: str = BinarizationMode.HARD_ROUNDING.value

    def __post_init__(self):
        self.base_channels = [int(c) for c in self.base_channels]
        if self.scales < 1 or len(self.base_channels) != self.scales:
            raise ValueError("base_channels needs exactly one entry per scale")
        if any(c <= 0 or c % len(DILATIONS) for c in self.base_channels):
            raise ValueError("every channel count must be a positive multiple of 3")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.image_size % 2 ** (self.scales - 1):
            raise ValueError(
                f"image size {self.image_size} is not divisible by 2**(scales-1) = {2 ** (self.scales - 1)}"
            )
        BinarizationMode(self.binarization)

    def to_dict(self) -> dict:
        return asdict(self)


class Network:
    """A named parameter collection plus a forward function."""

    def __init__(self, prefix: str, rng: np.random.Generator, dtype=np.float32):
        self.prefix = prefix
        self.params: dict[str, Tensor] = {}
        self._rng = rng
        self._dtype = dtype

    def _param(self, name: str, shape: tuple[int, ...], std: float) -> Tensor:
        full = f"{self.prefix}.{name}"
        if full in self.params:
            raise KeyError(f"duplicate parameter {full}")
        data = (self._rng.standard_normal(shape) * std) if std > 0 else np.zeros(shape)
        t = Tensor(data.astype(self._dtype), requires_grad=True)
        self.params[full] = t
        return t

    def requires_grad_(self, flag: bool) -> "Network":
        for p in self.params.values():
            p.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if arrays[name].shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: {arrays[name].shape} vs {p.shape}")
            p.data = np.array(arrays[name], dtype=p.dtype)


class _Branches:
    """Three parallel dilated (transposed) convolutions followed by ELU and concatenation."""

    def __init__(self, net: Network, name: str, cin: int, cout: int, transposed: bool):
        self.transposed = transposed
        each = cout // len(DILATIONS)
        std = np.sqrt(2.0 / (cin * KERNEL * KERNEL))
        shape = (cin, each, KERNEL, KERNEL) if transposed else (each, cin, KERNEL, KERNEL)
        self.layers = [
            (net._param(f"{name}.d{d}.w", shape, std), net._param(f"{name}.d{d}.b", (each,), 0.0), d)
            for d in DILATIONS
        ]

    def __call__(self, x: Tensor) -> Tensor:
        op = tconv2d if self.transposed else conv2d
        return concat([elu(op(x, w, b, dilation=d)) for w, b, d in self.layers], axis=1)


class Hourglass:
    def __init__(self, net: Network, in_channels: int, cfg: NetConfig):
        S, base = cfg.scales, cfg.base_channels
        self.scales = S
        self.encoder = []
        cin = in_channels
        for i in range(S):
            self.encoder.append(_Branches(net, f"cblock{i}", cin, base[i], transposed=False))
            cin = base[i]
        self.decoder = {}
        for j in reversed(range(S)):
            if j == S - 1:
                cin = base[S - 1]
            else:
                skip = base[j - 1] if j >= 1 else in_channels
                cin = self._dec_out(j + 1, base) + skip
            self.decoder[j] = _Branches(net, f"tcblock{j}", cin, self._dec_out(j, base), transposed=True)
        self.out_channels = self._dec_out(0, base)

    @staticmethod
    def _dec_out(j: int, base: list[int]) -> int:
        return base[max(j - 1, 0)]

    def __call__(self, x: Tensor) -> Tensor:
        S = self.scales
        feats = []
        h = x
        for i, block in enumerate(self.encoder):
            h = block(h)
            if i < S - 1:
                h = maxpool2x2(h)
            feats.append(h)
        for j in reversed(range(S)):
            if j < S - 1:
                skip = feats[j - 1] if j >= 1 else x
                h = concat([h, skip], axis=1)
            h = self.decoder[j](h)
            if j > 0:
                h = upsample2x2(h)
        return h


def _check_input(x: Tensor, cfg: NetConfig) -> None:
    if x.shape[2:] != (cfg.image_size, cfg.image_size):
        raise ValueError(f"expected {cfg.image_size}x{cfg.image_size} inputs, got {x.shape[2:]}")


class Generator(Network):
    """``g(r, c, C f)``: inpaints from a seed map, a mask plane and the masked image."""

    def __init__(self, cfg: NetConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__("g", rng, dtype)
        self.cfg = cfg
        k = cfg.channels
        self.body = Hourglass(self, 2 * k + 1, cfg)
        c = self.body.out_channels
        self.head_w = self._param("head.w", (c, k, KERNEL, KERNEL), np.sqrt(1.0 / (c * KERNEL * KERNEL)))
        self.head_b = self._param("head.b", (k,), 0.0)

    def __call__(self, seed: Tensor, mask: Tensor, known: Tensor) -> Tensor:
        x = concat([seed, mask, known], axis=1)
        _check_input(x, self.cfg)
        return hard_sigmoid(tconv2d(self.body(x), self.head_w, self.head_b))


class MaskGenerator(Network):
    """``m(r, f)``: hourglass whose last block is the binarisation block."""

    def __init__(self, cfg: NetConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__("m", rng, dtype)
        self.cfg = cfg
        k = cfg.channels
        self.mode = BinarizationMode(cfg.binarization)
        self.body = Hourglass(self, 2 * k, cfg)
        c = self.body.out_channels
        self.head_w = self._param("head.w", (c, 1, KERNEL, KERNEL), np.sqrt(1.0 / (c * KERNEL * KERNEL)))
        self.head_b = self._param("head.b", (1,), 0.0)

    def confidence(self, seed: Tensor, image: Tensor) -> Tensor:
        x = concat([seed, image], axis=1)
        _check_input(x, self.cfg)
        return hard_sigmoid(tconv2d(self.body(x), self.head_w, self.head_b))

    def __call__(self, seed: Tensor, image: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        return binarize(self.confidence(seed, image), self.mode, rng)


class Discriminator(Network):
    """Wasserstein critic ``d(image, mask)``: strided FBlocks, global average, affine output."""

    def __init__(self, cfg: NetConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__("d", rng, dtype)
        self.cfg = cfg
        cin = cfg.channels + 1
        self.blocks = []
        self.filters: list[tuple[str, str]] = []
        for i, cout in enumerate(cfg.base_channels):
            w = self._param(f"fblock{i}.w", (cout, cin, KERNEL, KERNEL), np.sqrt(2.0 / (cin * KERNEL * KERNEL)))
            b = self._param(f"fblock{i}.b", (cout,), 0.0)
            self.blocks.append((w, b))
            self.filters.append((f"d.fblock{i}.w", f"d.fblock{i}.b"))
            cin = cout
        self.out_w = self._param("out.w", (1, cin), np.sqrt(1.0 / cin))
        self.out_b = self._param("out.b", (1,), 0.0)
        self.filters.append(("d.out.w", "d.out.b"))

    def __call__(self, image: Tensor, mask: Tensor) -> Tensor:
        h = concat([image, mask], axis=1)
        for w, b in self.blocks:
            h = leaky_relu(conv2d(h, w, b, stride=2), 0.2)
        pooled = tmean(h, axis=(2, 3))
        return tsum(mul(pooled, self.out_w), axis=1) + self.out_b


def apply_inpainting_constraint(g_out, mask, image) -> Tensor:
    """``u = (1 - b) * g + b * f``; exact copy of ``f`` wherever ``b == 1``."""
    g_out = g_out if isinstance(g_out, Tensor) else Tensor(g_out)
    mask = mask if isinstance(mask, Tensor) else Tensor(mask)
    image = image if isinstance(image, Tensor) else Tensor(image)
    if g_out.shape != image.shape or mask.shape[0] != image.shape[0] or mask.shape[2:] != image.shape[2:]:
        raise ValueError(f"shape mismatch: g {g_out.shape}, mask {mask.shape}, image {image.shape}")
    return mul(1.0 - mask, g_out) + mul(mask, image)


def build_generator(cfg: NetConfig, rng: np.random.Generator, dtype=np.float32) -> Generator:
    return Generator(cfg, rng, dtype)


def build_mask_generator(cfg: NetConfig, rng: np.random.Generator, dtype=np.float32) -> MaskGenerator:
    return MaskGenerator(cfg, rng, dtype)


def build_discriminator(cfg: NetConfig, rng: np.random.Generator, dtype=np.float32) -> Discriminator:
    return Discriminator(cfg, rng, dtype)
