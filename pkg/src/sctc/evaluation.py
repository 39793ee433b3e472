"""HOI detection mAP with greedy triplet matching."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from sctc.boxes import iou

MATCH_THRESHOLD = 0.5

METRICS_SCHEMA = {
    "type": "object",
    "required": ["full", "rare", "non_rare", "per_category"],
    "properties": {
        "full": {"type": ["number", "null"]},
        "rare": {"type": ["number", "null"]},
        "non_rare": {"type": ["number", "null"]},
        "num_scenes": {"type": "integer"},
        "per_category": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["hoi", "action", "object", "ap", "gt", "rare"],
                "properties": {
                    "hoi": {"type": "integer"},
                    "action": {"type": "integer"},
                    "object": {"type": "integer"},
                    "ap": {"type": "number", "minimum": 0, "maximum": 1},
                    "gt": {"type": "integer", "minimum": 1},
                    "rare": {"type": "boolean"},
                },
            },
        },
    },
}

__all__ = ["iou", "MatchResult", "match_scene", "average_precision", "map_report",
           "evaluate", "METRICS_SCHEMA"]


@dataclass
class MatchResult:
    """Per HOI key ``(action, object_category)``: (score, is_tp) records and gt counts."""

    records: dict = field(default_factory=lambda: defaultdict(list))
    gt_counts: dict = field(default_factory=lambda: defaultdict(int))

    def merge(self, other):
        for k, v in other.records.items():
            self.records[k].extend(v)
        for k, n in other.gt_counts.items():
            self.gt_counts[k] += n
        return self


def _key(p):
    return (p.action, p.object_category)


def match_scene(predictions, gt_triplets, threshold=MATCH_THRESHOLD):
    """Greedy matching within each HOI category, highest score first (ties by index).

    A prediction is a true positive when some still-unmatched ground truth of
    its category has ``min(IoU_human, IoU_object) > threshold``; the best such
    ground truth (ties by index) is consumed.
    """
    result = MatchResult()
    gts = defaultdict(list)
    for t in gt_triplets:
        for a in sorted(t.actions):
            gts[(a, t.object_category)].append(t)
            result.gt_counts[(a, t.object_category)] += 1
    order = sorted(range(len(predictions)), key=lambda i: (-predictions[i].score, i))
    used = defaultdict(set)
    for i in order:
        p = predictions[i]
        key = _key(p)
        best, best_ov = None, threshold
        for j, t in enumerate(gts.get(key, ())):
            if j in used[key]:
                continue
            ov = min(iou(p.human_box, t.human_box), iou(p.object_box, t.object_box))
            if ov > best_ov:
                best, best_ov = j, ov
        if best is not None:
            used[key].add(best)
        result.records[key].append((p.score, best is not None))
    return result


def average_precision(tp, num_gt):
    """All-point interpolated AP for a TP/FP sequence already sorted by score.

    Returns None when ``num_gt`` is 0 (the category is left out of means).
    """
    if num_gt <= 0:
        return None
    tp = np.asarray(tp, dtype=np.float64)
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / num_gt
    precision = ctp / np.arange(1, len(tp) + 1)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _mean(values):
    return float(np.mean(values)) if values else None


def map_report(aps, rare):
    """Means over all, rare and non-rare categories; ``None`` for an empty subset.

    ``aps`` maps category -> AP (None entries are ignored); ``rare`` maps
    category -> bool.
    """
    have = {k: v for k, v in aps.items() if v is not None}
    return {
        "full": _mean(list(have.values())),
        "rare": _mean([v for k, v in have.items() if rare[k]]),
        "non_rare": _mean([v for k, v in have.items() if not rare[k]]),
    }


def category_aps(match):
    aps = {}
    for key, n in match.gt_counts.items():
        recs = sorted(enumerate(match.records.get(key, [])), key=lambda r: (-r[1][0], r[0]))
        aps[key] = average_precision([tp for _, (_, tp) in recs], n)
    return aps


def evaluate(predictions_by_scene, scenes, vocab):
    """Metrics document over scenes; ``predictions_by_scene`` maps scene id -> predictions."""
    match = MatchResult()
    for scene in scenes:
        match.merge(match_scene(predictions_by_scene.get(scene.id, []), scene.gt_triplets))
    aps = category_aps(match)
    idx = {k: vocab.hoi_index(*k) for k in aps}
    rare = {k: bool(vocab.rare[idx[k]]) for k in aps}
    report = map_report(aps, rare)
    report["num_scenes"] = len(scenes)
    report["per_category"] = [
        {"hoi": idx[k], "action": int(k[0]), "object": int(k[1]), "ap": aps[k],
         "gt": int(match.gt_counts[k]), "rare": rare[k]}
        for k in sorted(aps, key=lambda k: idx[k])
    ]
    return report
