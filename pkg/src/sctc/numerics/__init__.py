"""Reverse-mode autodiff tensors, layers and the optimizer."""

from sctc.numerics.layers import (
    FOCAL_ALPHA,
    FOCAL_GAMMA,
    Parameter,
    focal_loss,
    glorot,
    layer_norm,
    linear,
    mlp,
    param_rng,
    zeros,
)
from sctc.numerics.optim import AdamW, cosine_lr
from sctc.numerics.tensor import (
    Tensor,
    add,
    as_tensor,
    clip,
    concat,
    div,
    exp,
    getitem,
    grad_enabled,
    hadamard,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    power,
    relu,
    reshape,
    sigmoid,
    softmax,
    sub,
    tabs,
    take_rows,
    transpose,
    tsum,
)

__all__ = [
    "AdamW", "FOCAL_ALPHA", "FOCAL_GAMMA", "Parameter", "Tensor", "add", "as_tensor",
    "clip", "concat", "cosine_lr", "div", "exp", "focal_loss", "getitem", "glorot",
    "grad_enabled", "hadamard", "layer_norm", "linear", "log", "matmul", "mean", "mlp",
    "mul", "no_grad", "param_rng", "power", "relu", "reshape", "sigmoid", "softmax",
    "sub", "tabs", "take_rows", "transpose", "tsum", "zeros",
]
