"""A small reverse-mode autodiff engine covering the operators the networks need."""

from .gradcheck import GradCheckReport, grad_check
from .ops import (
    BinarizationMode,
    DimensionError,
    binarize,
    conv2d,
    elu,
    hard_sigmoid,
    leaky_relu,
    maxpool2x2,
    straight_through_surrogate,
    tconv2d,
    upsample2x2,
)
from .optim import Adam, AdamState, adam_step, weight_normalize
from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    matmul,
    mul,
    no_grad,
    reshape,
    tabs,
    tmean,
    topological_order,
    tsum,
)

__all__ = [
    "Adam",
    "AdamState",
    "BinarizationMode",
    "DimensionError",
    "GradCheckReport",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "binarize",
    "concat",
    "conv2d",
    "elu",
    "grad_check",
    "hard_sigmoid",
    "leaky_relu",
    "matmul",
    "maxpool2x2",
    "mul",
    "no_grad",
    "reshape",
    "straight_through_surrogate",
    "tabs",
    "tconv2d",
    "tmean",
    "topological_order",
    "tsum",
    "upsample2x2",
    "weight_normalize",
]
