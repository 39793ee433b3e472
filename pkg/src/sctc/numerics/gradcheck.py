"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

import numpy as np


def numeric_grad(fn, tensor, h=1e-5, indices=None):
    """Central differences of scalar ``fn()`` w.r.t. entries of ``tensor``.

    ``tensor.data`` is perturbed in place and restored. Returns an array
    shaped like ``tensor`` (or a vector over ``indices`` if given).
    """
    flat = tensor.data.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = np.zeros(len(idx))
    for n, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn().data)
        flat[i] = orig - h
        fm = float(fn().data)
        flat[i] = orig
        out[n] = (fp - fm) / (2.0 * h)
    return out.reshape(tensor.shape) if indices is None else out


def analytic_grads(fn, tensors):
    for t in tensors:
        t.grad = None
    fn().backward()
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def relative_error(analytic, numeric):
    """Norm-wise relative error ``|a - n| / max(|a|, |n|)`` (0 when both vanish)."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def elementwise_relative_error(analytic, numeric, floor=1e-6):
    """Max over entries of ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_gradients(fn, tensors, h=1e-5):
    """Norm-wise relative error of the analytic gradient for each tensor."""
    grads = analytic_grads(fn, tensors)
    return [relative_error(g, numeric_grad(fn, t, h)) for g, t in zip(grads, tensors)]
