"""Scene, detection and vocabulary records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sctc.errors import ValidationError, VocabularyError

PERSON = 0


def _box_ok(box):
    x1, y1, x2, y2 = box
    return x1 < x2 and y1 < y2


@dataclass(eq=False)
class Detection:
    box: tuple
    category: int
    score: float
    appearance: np.ndarray

    @property
    def is_human(self):
        return self.category == PERSON

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        return (
            tuple(self.box) == tuple(other.box)
            and self.category == other.category
            and self.score == other.score
            and np.array_equal(self.appearance, other.appearance)
        )


@dataclass(frozen=True)
class GtTriplet:
    human_box: tuple
    object_box: tuple
    object_category: int
    actions: tuple


@dataclass(eq=False)
class Scene:
    id: str
    image_size: tuple  # (W, H)
    detections: list
    feature_map: np.ndarray  # [Hf, Wf, d_map]
    gt_triplets: list = field(default_factory=list)

    @property
    def humans(self):
        return [i for i, d in enumerate(self.detections) if d.is_human]

    def validate(self, num_objects=None, num_actions=None):
        """Raise :class:`ValidationError` if any invariant is violated."""
        W, H = self.image_size
        if W <= 0 or H <= 0:
            raise ValidationError(f"{self.id}: non-positive image size {self.image_size}")

        def check_box(box, what):
            if len(box) != 4 or not _box_ok(box):
                raise ValidationError(f"{self.id}: {what} box {tuple(box)} needs x1<x2 and y1<y2")
            x1, y1, x2, y2 = box
            if x1 < 0 or y1 < 0 or x2 > W or y2 > H:
                raise ValidationError(f"{self.id}: {what} box {tuple(box)} leaves the image")

        dims = {d.appearance.shape for d in self.detections}
        if len(dims) > 1:
            raise ValidationError(f"{self.id}: appearance vectors have mixed shapes {dims}")
        for i, d in enumerate(self.detections):
            check_box(d.box, f"detection {i}")
            if d.category < 0 or (num_objects is not None and d.category >= num_objects):
                raise ValidationError(f"{self.id}: detection {i} category {d.category} out of range")
            if not 0.0 <= d.score <= 1.0:
                raise ValidationError(f"{self.id}: detection {i} score {d.score} outside [0, 1]")
        for k, t in enumerate(self.gt_triplets):
            check_box(t.human_box, f"triplet {k} human")
            check_box(t.object_box, f"triplet {k} object")
            if not t.actions:
                raise ValidationError(f"{self.id}: triplet {k} has an empty action set")
            if num_actions is not None and any(not 0 <= a < num_actions for a in t.actions):
                raise ValidationError(f"{self.id}: triplet {k} action out of range")
        if self.feature_map.ndim != 3:
            raise ValidationError(f"{self.id}: feature map must be rank 3")

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.id == other.id
            and tuple(self.image_size) == tuple(other.image_size)
            and self.detections == other.detections
            and np.array_equal(self.feature_map, other.feature_map)
            and self.gt_triplets == other.gt_triplets
        )


@dataclass(eq=False)
class HoiVocabulary:
    """HOI categories and their fixed text embeddings.

    Rows ``0..num_hoi-1`` of ``text_embeddings`` hold one embedding per
    (action, object) category; rows ``num_hoi + o`` hold the
    "no interaction with object o" embedding.
    """

    num_objects: int
    num_actions: int
    hois: list  # [(action, object)]
    rare: list  # [bool] per HOI
    text_embeddings: np.ndarray

    def __post_init__(self):
        self.hois = [tuple(int(v) for v in h) for h in self.hois]
        self.rare = [bool(r) for r in self.rare]
        self._index = {h: i for i, h in enumerate(self.hois)}

    @property
    def num_hoi(self):
        return len(self.hois)

    @property
    def dim(self):
        return self.text_embeddings.shape[1]

    def hoi_index(self, action, obj):
        try:
            return self._index[(int(action), int(obj))]
        except KeyError:
            raise VocabularyError(f"({action}, {obj}) is not an HOI category") from None

    def actions_for(self, obj):
        return [a for a, o in self.hois if o == obj]

    def non_interaction_row(self, obj):
        return self.num_hoi + int(obj)

    def prompt(self, index):
        """Text template the embedding row stands in for."""
        if index >= self.num_hoi:
            return f"A photo of a person have non interaction with the object{index - self.num_hoi}"
        a, o = self.hois[index]
        return f"A photo of a person action{a}-ing a/an object{o}"

    def __eq__(self, other):
        if not isinstance(other, HoiVocabulary):
            return NotImplemented
        return (
            self.num_objects == other.num_objects
            and self.num_actions == other.num_actions
            and self.hois == other.hois
            and self.rare == other.rare
            and np.array_equal(self.text_embeddings, other.text_embeddings)
        )
