"""Candidate human-object pairs, their spatial encoding and interaction features."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from sctc import numerics as nx
from sctc.boxes import iou_matrix

SPATIAL_DIM = 8
MATCH_IOU = 0.5
NEGATIVE_RATIO = 3
RATIO_FLOOR = 4


def spatial_feature(human_box, object_box, image_size):
    """``[dx, dy, ds, angle, A_h, A_o, A_I, A_U]`` for one box pair.

    Offsets run from the human center to the object center, normalized by
    image width/height; areas are fractions of the image area.
    """
    return spatial_features(np.asarray([human_box], float), np.asarray([object_box], float),
                            image_size)[0]


def spatial_features(human_boxes, object_boxes, image_size):
    """Vectorized :func:`spatial_feature` over aligned rows of ``[N, 4]`` boxes."""
    W, H = image_size
    hb = np.asarray(human_boxes, dtype=np.float64).reshape(-1, 4)
    ob = np.asarray(object_boxes, dtype=np.float64).reshape(-1, 4)
    dx = ((ob[:, 0] + ob[:, 2]) - (hb[:, 0] + hb[:, 2])) / (2.0 * W)
    dy = ((ob[:, 1] + ob[:, 3]) - (hb[:, 1] + hb[:, 3])) / (2.0 * H)
    ds = np.sqrt(dx * dx + dy * dy)
    angle = np.arctan2(dy, dx)
    img = float(W) * float(H)
    a_h = (hb[:, 2] - hb[:, 0]) * (hb[:, 3] - hb[:, 1])
    a_o = (ob[:, 2] - ob[:, 0]) * (ob[:, 3] - ob[:, 1])
    iw = np.clip(np.minimum(hb[:, 2], ob[:, 2]) - np.maximum(hb[:, 0], ob[:, 0]), 0, None)
    ih = np.clip(np.minimum(hb[:, 3], ob[:, 3]) - np.maximum(hb[:, 1], ob[:, 1]), 0, None)
    a_i = iw * ih
    a_u = a_h + a_o - a_i
    return np.column_stack([dx, dy, ds, angle, a_h / img, a_o / img, a_i / img, a_u / img])


@dataclass
class Pairs:
    """Struct-of-arrays over the candidate pairs of one scene.

    ``gt_actions`` is a ``[P, C_a]`` 0/1 matrix; ``F_ho`` and ``F`` are filled
    in by :func:`interaction_features`.
    """

    human_idx: np.ndarray
    object_idx: np.ndarray
    spatial: np.ndarray
    gt_label: np.ndarray
    gt_actions: np.ndarray
    F_ho: nx.Tensor | None = None
    F: nx.Tensor | None = None

    def __len__(self):
        return len(self.human_idx)


def enumerate_pairs(scene, num_actions):
    """Every (human, other detection) ordered pair with its ground-truth labels.

    A pair is positive when both boxes overlap a ground-truth triplet's boxes
    with IoU >= 0.5 and the object categories agree; its action set is the
    union over all such triplets.
    """
    dets = scene.detections
    humans = [i for i, d in enumerate(dets) if d.is_human]
    hi = [h for h in humans for o in range(len(dets)) if o != h]
    oi = [o for h in humans for o in range(len(dets)) if o != h]
    hi = np.asarray(hi, dtype=np.intp)
    oi = np.asarray(oi, dtype=np.intp)
    P = len(hi)
    labels = np.zeros(P)
    actions = np.zeros((P, num_actions))
    if P == 0:
        return Pairs(hi, oi, np.zeros((0, SPATIAL_DIM)), labels, actions)
    boxes = np.asarray([d.box for d in dets], dtype=np.float64)
    spatial = spatial_features(boxes[hi], boxes[oi], scene.image_size)
    if scene.gt_triplets:
        gh = iou_matrix(boxes, [t.human_box for t in scene.gt_triplets])
        go = iou_matrix(boxes, [t.object_box for t in scene.gt_triplets])
        cats = np.asarray([d.category for d in dets])
        gcats = np.asarray([t.object_category for t in scene.gt_triplets])
        match = (gh[hi] >= MATCH_IOU) & (go[oi] >= MATCH_IOU) & (cats[oi][:, None] == gcats[None, :])
        for p, k in zip(*np.nonzero(match)):
            labels[p] = 1.0
            actions[p, list(scene.gt_triplets[k].actions)] = 1.0
    return Pairs(hi, oi, spatial, labels, actions)


def instance_features(scene, params):
    """``[n_det, d_app + d_sem]``: appearance concatenated with the category embedding."""
    app = nx.Tensor(np.stack([d.appearance for d in scene.detections]))
    cats = [d.category for d in scene.detections]
    sem = nx.take_rows(params["instance.category_embed"], cats)
    return nx.concat([app, sem], axis=-1)


def interaction_features(inst, pairs, params):
    """Return ``(F_ho, F)``: [F_h ; F_o ; spatial] and its MLP projection."""
    F_h = nx.take_rows(inst, pairs.human_idx)
    F_o = nx.take_rows(inst, pairs.object_idx)
    F_ho = nx.concat([F_h, F_o, nx.Tensor(pairs.spatial)], axis=-1)
    F = nx.mlp(F_ho, [
        (params["interaction.mlp.0.W"], params["interaction.mlp.0.b"]),
        (params["interaction.mlp.1.W"], params["interaction.mlp.1.b"]),
    ])
    return F_ho, F


def build_pairs(scene, vocab, params):
    """Enumerate candidates and attach their interaction features."""
    pairs = enumerate_pairs(scene, vocab.num_actions)
    if len(pairs) == 0:
        return pairs
    F_ho, F = interaction_features(instance_features(scene, params), pairs, params)
    return replace(pairs, F_ho=F_ho, F=F)


def sample_training_pairs(labels, ratio=NEGATIVE_RATIO, scores=None, rng=None,
                          ratio_floor=RATIO_FLOOR):
    """Indices (ascending) of all positives plus the hardest negatives.

    With ``n`` positives, ``min(ratio * n, #negatives)`` negatives are kept:
    those with the highest ``scores`` (ties by index), or a random draw from
    ``rng`` when no scores exist yet. Scenes without positives keep
    ``min(ratio_floor, #negatives)`` random negatives.
    """
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels > 0)
    neg = np.flatnonzero(labels <= 0)
    if rng is None:
        rng = np.random.default_rng(0)
    if len(pos) == 0:
        n_keep = min(ratio_floor, len(neg))
        chosen = rng.choice(neg, size=n_keep, replace=False) if n_keep else neg[:0]
    else:
        n_keep = min(int(math.ceil(ratio * len(pos))), len(neg))
        if scores is None:
            chosen = rng.choice(neg, size=n_keep, replace=False) if n_keep else neg[:0]
        else:
            s = np.asarray(scores, dtype=np.float64)[neg]
            order = np.lexsort((neg, -s))
            chosen = neg[order[:n_keep]]
    return np.sort(np.concatenate([pos, np.asarray(chosen, dtype=np.intp)])).astype(np.intp)
