"""Finite-difference verification of every parameter group of the full model."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from sctc.numerics.gradcheck import analytic_grads, numeric_grad, relative_error
from sctc.fixtures import generate_dataset
from sctc.model import HoiModel, ModelConfig

TOLERANCE = 1e-4
STEP = 1e-5

# Micro model: small widths, two decoder layers, K above the pair count so
# proposal selection cannot flip under perturbation.
MICRO_MODEL = dict(d_sem=4, d_model=16, heads=2, d_ff=16, layers=2, top_k=32)
MICRO_DATA = dict(num_train=2, num_test=0, max_distractors=1, idle_human_prob=0.0,
                  d_app=6, d_map=8, map_size=3, d_text=8)
# The full model, then an arm reaching the groups it leaves out
# (MLP fusion, the constant edge and the constant adjacency).
VARIANTS = ({}, dict(sta=False, edge="LE", relations=("LE",)))


@dataclass
class GroupResult:
    group: str
    error: float
    checked: int

    @property
    def passed(self):
        return self.error <= TOLERANCE


def group_of(name):
    """Parameter group: the layer a tensor belongs to (``decoder.0.self.q.W`` -> ``decoder.0.self.q``)."""
    head, _, last = name.rpartition(".")
    return head if last in ("W", "b", "g") and head else name


def micro_dataset(seed=0):
    train, _, vocab = generate_dataset(seed=seed, **MICRO_DATA)
    return train, vocab


def _indices(name, grad, samples, seed):
    """Uniform draws plus draws among entries with a nonzero analytic gradient.

    The second half matters for tensors only partly used by a forward pass
    (the constant adjacency is cropped to the proposal count).
    """
    size = grad.size
    if size <= 2 * samples:
        return list(range(size))
    rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
    picked = set(rng.choice(size, samples, replace=False).tolist())
    live = np.flatnonzero(grad.reshape(-1))
    if len(live):
        picked |= set(rng.choice(live, min(samples, len(live)), replace=False).tolist())
    return sorted(picked)


def check_model(samples=4, seed=0, corrupt=None, h=STEP):
    """Max relative error per parameter group, each group reported once.

    The scalar checked is the summed total loss over a two-scene micro
    dataset; up to ``samples`` entries per tensor are perturbed. The error of
    a group is the norm-wise relative error over its sampled entries.
    ``corrupt`` names a group whose analytic gradient is deliberately
    perturbed, to prove the check can fail.
    """
    scenes, vocab = micro_dataset(seed)
    results = {}
    for variant in VARIANTS:
        cfg = ModelConfig.for_data(vocab, scenes[0], seed=seed, **{**MICRO_MODEL, **variant})
        model = HoiModel(cfg, vocab)

        def loss():
            total = None
            for s in scenes:
                t = model.forward(s).losses["total"]
                total = t if total is None else total + t
            return total

        todo = {}
        for name, p in model.params.items():
            g = group_of(name)
            if g not in results:
                todo.setdefault(g, []).append(p)
        if not todo:
            continue
        tensors = [p for ps in todo.values() for p in ps]
        grads = dict(zip((p.name for p in tensors), analytic_grads(loss, tensors)))
        for g, ps in todo.items():
            a, n = [], []
            for p in ps:
                idx = _indices(p.name, grads[p.name], samples, seed)
                ga = grads[p.name].reshape(-1)[idx]
                if corrupt == g:
                    ga = ga * 1.01 + 1e-3
                a.append(ga)
                n.append(numeric_grad(loss, p, h, idx))
            a, n = np.concatenate(a), np.concatenate(n)
            results[g] = GroupResult(g, relative_error(a, n), len(a))
    if corrupt is not None and corrupt not in results:
        raise KeyError(f"no parameter group {corrupt!r}")
    return [results[g] for g in sorted(results)]
