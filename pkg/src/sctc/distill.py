"""Distillation targets from the fixed text-embedding table and the L1 distillation loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sctc import numerics as nx
from sctc.errors import ConfigurationError, DimensionError

SINGLE, MULTI, NEGATIVE = "single-hoi", "multi-hoi-average", "negative-average"


@dataclass
class KdTarget:
    embedding: np.ndarray
    provenance: str


def negative_centroid(vocab, negatives="all"):
    """Mean of all table rows (``"all"``) or of the HOI rows only (``"hoi"``)."""
    if negatives == "all":
        return vocab.text_embeddings.mean(axis=0)
    if negatives == "hoi":
        return vocab.text_embeddings[: vocab.num_hoi].mean(axis=0)
    raise ConfigurationError(f"unknown negative-target mode {negatives!r}")


def build_targets(object_categories, gt_labels, gt_actions, vocab, negatives="all"):
    """One target per pair.

    Positives map to their HOI row (one action) or the mean of their HOI rows
    (several actions); negatives share the centroid of the whole table.
    Raises :class:`~sctc.errors.VocabularyError` for an (action, object)
    combination outside the vocabulary.
    """
    neg = negative_centroid(vocab, negatives)
    out = []
    for cat, label, acts in zip(object_categories, gt_labels, gt_actions):
        actions = np.flatnonzero(np.asarray(acts) > 0)
        if label <= 0 or len(actions) == 0:
            out.append(KdTarget(neg, NEGATIVE))
            continue
        rows = [vocab.hoi_index(a, cat) for a in actions]
        emb = vocab.text_embeddings[rows].mean(axis=0)
        out.append(KdTarget(emb, SINGLE if len(rows) == 1 else MULTI))
    return out


def target_matrix(targets, dim):
    if not targets:
        return np.zeros((0, dim))
    return np.stack([t.embedding for t in targets])


def kd_loss(F, E):
    """Per-pair L1 distance summed over dimensions, averaged over pairs.

    ``E`` is treated as a constant; only ``F`` receives gradient.
    """
    F = nx.as_tensor(F)
    E = np.asarray(E.data if isinstance(E, nx.Tensor) else E, dtype=np.float64)
    if F.shape != E.shape:
        raise DimensionError(f"kd_loss: features {F.shape} vs targets {E.shape}")
    if F.ndim != 2 or F.shape[0] < 1:
        raise DimensionError("kd_loss needs at least one pair")
    return nx.tabs(F - E).sum() * (1.0 / F.shape[0])
