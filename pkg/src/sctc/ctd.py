"""Cross-triplet dependency: a graph over selected proposals with a learned adjacency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sctc import numerics as nx
from sctc.boxes import union_box
from sctc.errors import ConfigurationError
from sctc.interaction import spatial_features

RELATIONS = ("IR", "SR", "LR")
NORMS = ("softmax", "sigmoid", "raw")
D_INS, D_SEM, D_LAY, FUSE_HIDDEN = 64, 256, 64, 128


@dataclass
class RelationTensors:
    ins: np.ndarray | None = None  # [K, K, 2]
    sem: np.ndarray | None = None  # [K, K, C_o]
    lay: np.ndarray | None = None  # [K, K, 8]
    adj: nx.Tensor | None = None  # [K, K]


def instance_relation(human_idx, object_idx):
    """Channel 0: same human detection; channel 1: same object detection."""
    h = np.asarray(human_idx)
    o = np.asarray(object_idx)
    return np.stack([h[:, None] == h[None, :], o[:, None] == o[None, :]], axis=-1).astype(np.float64)


def semantic_relation(object_categories, num_objects):
    """One-hot at channel c where both proposals' objects have category c."""
    c = np.asarray(object_categories)
    same = c[:, None] == c[None, :]
    onehot = np.eye(num_objects)[c]  # [K, C_o]
    return same[..., None] * onehot[:, None, :]


def union_boxes(human_boxes, object_boxes):
    return np.asarray([union_box(h, o) for h, o in zip(human_boxes, object_boxes)], dtype=np.float64)


def layout_relation(human_boxes, object_boxes, image_size):
    """Spatial feature between the union boxes of every ordered proposal pair."""
    u = union_boxes(human_boxes, object_boxes)
    K = len(u)
    j, k = np.meshgrid(np.arange(K), np.arange(K), indexing="ij")
    return spatial_features(u[j.ravel()], u[k.ravel()], image_size).reshape(K, K, 8)


def build_relations(human_idx, object_idx, boxes, categories, num_objects, image_size):
    """All three relation tensors for proposals given by detection indices."""
    boxes = np.asarray(boxes, dtype=np.float64)
    cats = np.asarray(categories)
    return RelationTensors(
        ins=instance_relation(human_idx, object_idx),
        sem=semantic_relation(cats[object_idx], num_objects),
        lay=layout_relation(boxes[human_idx], boxes[object_idx], image_size),
    )


def _normalize(logits, norm):
    if norm == "softmax":
        return nx.softmax(logits, axis=-1)
    if norm == "sigmoid":
        return nx.sigmoid(logits)
    if norm == "raw":
        return logits
    raise ConfigurationError(f"unknown adjacency normalization {norm!r}")


def fuse_adjacency(rel, params, relations=RELATIONS, norm="softmax"):
    """Embed each enabled relation along its channel axis, fuse by MLP to a scalar per (j, k).

    ``relations == ("LE",)`` ignores ``rel`` contents and uses a learned
    constant matrix cropped to the proposal count.
    """
    if tuple(relations) == ("LE",):
        K = rel.ins.shape[0]
        logits = params["ctd.adj_const"][:K, :K]
        return _normalize(logits, norm)
    parts = []
    for name, key, tensor in (("IR", "ins", rel.ins), ("SR", "sem", rel.sem), ("LR", "lay", rel.lay)):
        if name in relations:
            parts.append(nx.linear(nx.Tensor(tensor), params[f"ctd.embed_{key}.W"],
                                   params[f"ctd.embed_{key}.b"]))
    if not parts:
        raise ConfigurationError("at least one relation (IR, SR, LR) or LE is required")
    x = parts[0] if len(parts) == 1 else nx.concat(parts, axis=-1)
    K = x.shape[0]
    logits = nx.mlp(x, [(params["ctd.fuse.0.W"], params["ctd.fuse.0.b"]),
                        (params["ctd.fuse.1.W"], params["ctd.fuse.1.b"])])
    return _normalize(logits.reshape(K, K), norm)


def ctd_update(nu_hoi, adj):
    """``adj @ nu_hoi + nu_hoi``."""
    return nx.matmul(adj, nu_hoi) + nu_hoi
