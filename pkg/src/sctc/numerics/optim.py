"""AdamW with a per-epoch cosine-annealed step size."""

from __future__ import annotations

import math

import numpy as np

from sctc.errors import ConfigurationError, MissingGradientError


def cosine_lr(base_lr, epoch, horizon):
    """``base * 0.5 * (1 + cos(pi * epoch / horizon))``; reaches 0 at ``epoch == horizon``."""
    if horizon <= 0:
        raise ConfigurationError("schedule horizon must be positive")
    epoch = min(max(epoch, 0), horizon)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / horizon))


class AdamW:
    """Adam with decoupled weight decay (Loshchilov & Hutter).

    The optimizer state holds first/second moments per parameter, the step
    count, the base step size, the decay coefficient and the schedule horizon
    in epochs.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=1e-4, horizon=10):
        self.params = [p for p in params if p.trainable]
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigurationError("parameter names must be unique")
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.horizon = horizon
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def lr_at(self, epoch):
        return cosine_lr(self.lr, epoch, self.horizon)

    def step(self, epoch):
        missing = [p.name for p in self.params if p.grad is None]
        if missing:
            raise MissingGradientError(
                f"no gradient for {len(missing)} parameter(s), e.g. {missing[0]!r}; "
                "call backward() before step()"
            )
        lr = self.lr_at(epoch)
        b1, b2 = self.betas
        self.t += 1
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p in self.params:
            g = p.grad
            m = self.m[p.name]
            v = self.v[p.name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if self.weight_decay:
                p.data *= 1.0 - lr * self.weight_decay
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return lr
