"""Parameters and the small layer vocabulary the interaction head is built from."""

from __future__ import annotations

import zlib

import numpy as np

from sctc.errors import ConfigurationError, DimensionError
from sctc.numerics.tensor import (
    Tensor,
    as_tensor,
    clip,
    log,
    matmul,
    power,
    relu,
)

FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
PROB_CLAMP = 1e-7


class Parameter(Tensor):
    """A named leaf tensor owned by a model."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name, trainable=True):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def param_rng(seed, name):
    """Generator keyed by (seed, name) so parameters don't depend on creation order."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def glorot(seed, name, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(param_rng(seed, name).uniform(-limit, limit, (fan_in, fan_out)), name)


def zeros(name, *shape):
    return Parameter(np.zeros(shape), name)


def linear(x, W, b=None):
    """``x @ W + b`` over the last axis of ``x``."""
    x = as_tensor(x)
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise DimensionError(f"linear: bias {b.shape} does not match weight {W.shape}")
    if x.ndim == 1:
        y = matmul(x.reshape(1, -1), W).reshape(W.shape[1])
    elif x.ndim == 2:
        y = matmul(x, W)
    else:
        lead = x.shape[:-1]
        y = matmul(x.reshape(-1, x.shape[-1]), W).reshape(*lead, W.shape[1])
    return y if b is None else y + b


def mlp(x, layers, activation=relu, final_activation=None):
    """Alternate ``linear`` and ``activation``; the last layer gets ``final_activation``."""
    if not layers:
        raise ConfigurationError("mlp needs at least one (W, b) layer")
    for i, (W, b) in enumerate(layers):
        x = linear(x, W, b)
        if i < len(layers) - 1:
            x = activation(x)
        elif final_activation is not None:
            x = final_activation(x)
    return x


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    n = x.shape[-1]
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gx_hat = g * gamma.data
        gx = inv / n * (
            n * gx_hat
            - gx_hat.sum(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._make(out, (x, gamma, beta), backward)


def focal_loss(p_hat, y, gamma=FOCAL_GAMMA, alpha=FOCAL_ALPHA):
    """Elementwise, unreduced focal loss on probabilities.

    ``y`` is a 0/1 array (not differentiated). Probabilities are clamped to
    ``[1e-7, 1 - 1e-7]`` so the logs stay finite.
    """
    p = clip(as_tensor(p_hat), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float64)
    if y.shape != p.shape:
        raise DimensionError(f"focal_loss: labels {y.shape} vs predictions {p.shape}")
    pos = -alpha * power(1.0 - p, gamma) * log(p)
    neg = -(1.0 - alpha) * power(p, gamma) * log(1.0 - p)
    return pos * y + neg * (1.0 - y)
