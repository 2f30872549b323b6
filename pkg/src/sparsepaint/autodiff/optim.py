"""Adam updates and unit-norm filter normalisation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float = 5e-5,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, applied in place to ``params``.

    Parameters without an entry in ``grads`` are treated as having zero gradient.
    """
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        if m.shape != p.shape:
            raise ValueError(f"optimiser state for {name} has shape {m.shape}, expected {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data -= step.astype(p.dtype)


class Adam:
    def __init__(self, params: Mapping[str, Tensor], lr=5e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def step(self) -> None:
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def weight_normalize(
    params: Mapping[str, Tensor], filters: Sequence[tuple[str, str | None]]
) -> list[tuple[str, int]]:
    """Rescale every output filter (kernel slice plus its bias) to unit 2-norm.

    ``filters`` lists ``(weight_name, bias_name)`` pairs; the first axis of a
    weight indexes output filters.  Zero filters are left untouched and
    returned as ``(weight_name, index)`` pairs.
    """
    zero: list[tuple[str, int]] = []
    for wname, bname in filters:
        w = params[wname].data
        flat = w.reshape(w.shape[0], -1)
        sq = np.einsum("ij,ij->i", flat.astype(np.float64), flat.astype(np.float64))
        b = params[bname].data if bname is not None else None
        if b is not None:
            sq = sq + b.astype(np.float64) ** 2
        norm = np.sqrt(sq)
        ok = norm > 0
        for idx in np.flatnonzero(~ok):
            zero.append((wname, int(idx)))
        scale = np.where(ok, 1.0 / np.where(ok, norm, 1.0), 1.0)
        params[wname].data = (flat * scale[:, None]).astype(w.dtype).reshape(w.shape)
        if b is not None:
            params[bname].data = (b * scale).astype(b.dtype)
    if zero:
        log.warning("weight_normalize left %d zero-norm filters untouched: %s", len(zero), zero)
    return zero
