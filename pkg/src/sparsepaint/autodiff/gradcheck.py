"""Finite-difference validation of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ops import straight_through_surrogate
from .tensor import Tensor, topological_order


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    excluded: list[str] = field(default_factory=list)

    def passed(self, tol: float = 1e-3) -> bool:
        return self.max_rel_error <= tol


def grad_check(
    fn: Callable[[Tensor], Tensor],
    x: np.ndarray,
    h: float = 1e-4,
    wrt: Tensor | None = None,
) -> GradCheckReport:
    """Compare the reverse-mode gradient of scalar ``fn`` with central differences.

    The gradient is taken with respect to the input ``x``, or with respect to
    the tensor ``wrt`` (typically a parameter used inside ``fn``) when given.
    The error is ``max|ad - fd| / max(max|ad|, max|fd|)``.

    Straight-through nodes have no true derivative; they are replaced by their
    linear surrogate during the check and listed in ``excluded``.
    """
    xt = Tensor(np.array(x, dtype=np.float64), requires_grad=wrt is None)
    target = xt if wrt is None else wrt
    target.grad = None
    out = fn(xt)
    if out.data.size != 1:
        raise ValueError(f"grad_check needs a scalar output, got shape {out.shape}")
    excluded = [f"{node.op}#{i}" for i, node in enumerate(topological_order(out)) if node.straight_through]

    with straight_through_surrogate():
        target.grad = None
        out = fn(xt)
        out.backward()
        analytic = np.zeros_like(target.data) if target.grad is None else target.grad.copy()

        numeric = np.zeros_like(target.data)
        flat = target.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn(xt).data)
            flat[i] = orig - h
            fm = float(fn(xt).data)
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * h)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    err = float(np.abs(analytic - numeric).max(initial=0.0) / scale) if scale > 0 else 0.0
    return GradCheckReport(err, flat.size, excluded)
