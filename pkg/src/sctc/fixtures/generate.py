"""Deterministic synthetic HOI datasets with exactly known ground truth.

A fixed random "world" (per seed) defines class and action appearance
centroids, per-action spatial layouts, feature-map action cues and the
text-embedding table. Scenes are then sampled from that world:

* appearance = class centroid + interaction cue + Gaussian noise, where the
  interaction cue is the mean action centroid of the object's actions
  scaled by a per-triplet cue strength;
* interacting objects sit at an action-specific offset from their human;
* a configured fraction of scenes contains a group of triplets sharing a
  human or an object. With ``cross_triplet`` enabled, all but one member of
  such a group (and "echo" triplets repeating another triplet's action and
  object category) carry only a weak action cue and a random layout, so
  their action is recoverable mainly from the related triplets.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from sctc.boxes import iou
from sctc.errors import ConfigurationError
from sctc.fixtures.types import PERSON, Detection, GtTriplet, HoiVocabulary, Scene

TRAIN, TEST = 0, 1


@dataclass
class GeneratorConfig:
    seed: int = 42
    num_train: int = 200
    num_test: int = 50
    num_objects: int = 8  # includes the person class 0
    num_actions: int = 8
    actions_per_object: int = 4
    person_actions: int = 2
    hoi_table: list | None = None
    image_size: tuple = (640, 480)
    d_app: int = 32
    d_map: int = 64
    map_size: int = 8
    d_text: int = 64
    appearance_noise: float = 0.5
    map_noise: float = 0.5
    map_cue: float = 0.5
    layout_noise: float = 0.25
    jitter_iou: float = 0.7
    shared_fraction: float = 0.5
    cross_triplet: bool = True
    weak_cue: float = 0.1
    echo_prob: float = 0.5
    extra_triplet_prob: float = 0.5
    multi_action_prob: float = 0.25
    max_distractors: int = 10
    idle_human_prob: float = 0.8
    score_low: float = 0.5  # detector scores are uniform on [score_low, 1]
    gt_score_low: float = 0.5  # lower bound for instances in a triplet
    zipf: float = 0.8

    def to_dict(self):
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "image_size" in d:
            d["image_size"] = tuple(d["image_size"])
        return cls(**d)


@dataclass
class World:
    hois: list
    hoi_weights: np.ndarray
    class_centroids: np.ndarray
    action_centroids: np.ndarray
    active: np.ndarray
    idle: np.ndarray
    action_maps: np.ndarray
    action_angles: np.ndarray
    action_dists: np.ndarray
    object_sizes: np.ndarray
    text_embeddings: np.ndarray
    objects_for_action: dict = field(default_factory=dict)


def _check(cfg):
    if cfg.num_train <= 0 or cfg.num_test < 0:
        raise ConfigurationError("need at least one training scene")
    if cfg.num_objects < 2 or cfg.num_actions < 2:
        raise ConfigurationError("need >= 2 object categories (person + 1) and >= 2 actions")
    if not 0.0 <= cfg.shared_fraction <= 1.0:
        raise ConfigurationError("shared_fraction must lie in [0, 1]")
    if cfg.hoi_table is not None and len(cfg.hoi_table) == 0:
        raise ConfigurationError("HOI table is empty")
    if not 0.0 < cfg.jitter_iou <= 1.0:
        raise ConfigurationError("jitter_iou must lie in (0, 1]")
    if not (0.0 <= cfg.score_low <= 1.0 and 0.0 <= cfg.gt_score_low <= 1.0):
        raise ConfigurationError("detector score bounds must lie in [0, 1]")
    if cfg.max_distractors < 1:
        raise ConfigurationError("max_distractors must be >= 1")


def build_world(cfg):
    _check(cfg)
    rng = np.random.default_rng([cfg.seed, 7919])
    C_o, C_a = cfg.num_objects, cfg.num_actions
    if cfg.hoi_table is not None:
        hois = sorted({(int(a), int(o)) for a, o in cfg.hoi_table})
        for a, o in hois:
            if not (0 <= a < C_a and 0 <= o < C_o):
                raise ConfigurationError(f"HOI ({a}, {o}) out of range")
    else:
        hois = []
        for o in range(C_o):
            k = cfg.person_actions if o == PERSON else cfg.actions_per_object
            k = min(k, C_a)
            for a in sorted(rng.choice(C_a, size=k, replace=False)):
                hois.append((int(a), o))
        hois.sort()
    if not hois:
        raise ConfigurationError("HOI table is empty")
    ranks = rng.permutation(len(hois))
    weights = 1.0 / (ranks + 1.0) ** cfg.zipf
    weights /= weights.sum()
    text = rng.normal(size=(len(hois) + C_o, cfg.d_text))
    text /= np.linalg.norm(text, axis=1, keepdims=True)
    angles = np.linspace(0, 2 * math.pi, C_a, endpoint=False) + rng.uniform(-0.2, 0.2, C_a)
    world = World(
        hois=hois,
        hoi_weights=weights,
        class_centroids=rng.normal(size=(C_o, cfg.d_app)),
        action_centroids=rng.normal(size=(C_a, cfg.d_app)),
        active=0.7 * rng.normal(size=cfg.d_app),
        idle=0.7 * rng.normal(size=cfg.d_app),
        action_maps=rng.normal(size=(C_a, cfg.d_map)),
        action_angles=rng.permutation(angles),
        action_dists=rng.uniform(0.35, 0.9, C_a),
        object_sizes=np.column_stack([rng.uniform(30, 110, C_o), rng.uniform(30, 110, C_o)]),
        text_embeddings=_f32(text),
    )
    for a, o in hois:
        world.objects_for_action.setdefault(a, []).append(o)
    return world


def _f32(x):
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def _r(v):
    return float(round(v, 1))


def _fit(cx, cy, w, h, W, H):
    """Box of size (w, h) centered near (cx, cy), shifted to lie inside the image."""
    w, h = min(w, W - 1.0), min(h, H - 1.0)
    x1 = min(max(cx - w / 2, 0.0), W - w)
    y1 = min(max(cy - h / 2, 0.0), H - h)
    return (_r(x1), _r(y1), _r(min(x1 + w, W)), _r(min(y1 + h, H)))


def appearance_centroid(world, category, subject, object_actions=(), cue=1.0):
    """Noise-free appearance for an instance.

    ``subject`` marks a human acting on something; ``object_actions`` are the
    actions performed on this instance (empty if it is not an HOI object).
    """
    v = world.class_centroids[category].copy()
    if object_actions:
        v += world.active + cue * world.action_centroids[list(object_actions)].mean(axis=0)
    elif subject:
        v += world.active
    else:
        v += world.idle
    return v


class _SceneBuilder:
    def __init__(self, cfg, world, rng):
        self.cfg, self.world, self.rng = cfg, world, rng
        self.W, self.H = cfg.image_size
        self.instances = []  # dicts: cat, box, subject, object_actions, cue
        self.triplets = []  # (human_inst, object_inst, actions)

    def new_instance(self, cat, box):
        self.instances.append(
            {"cat": int(cat), "box": box, "subject": False, "object_actions": [], "cue": 1.0}
        )
        return len(self.instances) - 1

    def random_human(self):
        rng = self.rng
        w, h = rng.uniform(50, 110), rng.uniform(120, 240)
        cx, cy = rng.uniform(w / 2, self.W - w / 2), rng.uniform(h / 2, self.H - h / 2)
        return self.new_instance(PERSON, _fit(cx, cy, w, h, self.W, self.H))

    def object_size(self, cat):
        s = self.world.object_sizes[cat] * self.rng.uniform(0.8, 1.25, 2)
        if cat == PERSON:
            s = np.array([self.rng.uniform(50, 110), self.rng.uniform(120, 240)])
        return s

    def place_near(self, anchor_box, cat, angle, dist_scale, sign=1.0):
        ax, ay = 0.5 * (anchor_box[0] + anchor_box[2]), 0.5 * (anchor_box[1] + anchor_box[3])
        ah = anchor_box[3] - anchor_box[1]
        dist = dist_scale * max(ah, 60.0) * (1 + 0.5 * self.cfg.layout_noise * self.rng.normal())
        cx, cy = ax + sign * dist * math.cos(angle), ay + sign * dist * math.sin(angle)
        w, h = self.object_size(cat)
        return self.new_instance(cat, _fit(cx, cy, w, h, self.W, self.H))

    def action_angle(self, action, weak):
        if weak:
            return self.rng.uniform(0, 2 * math.pi)
        return self.world.action_angles[action] + self.cfg.layout_noise * self.rng.normal()

    def sample_hoi(self):
        return self.world.hois[self.rng.choice(len(self.world.hois), p=self.world.hoi_weights)]

    def actions_with(self, primary, obj):
        acts = [primary]
        others = [a for a, o in self.world.hois if o == obj and a != primary]
        if others and self.rng.random() < self.cfg.multi_action_prob:
            acts.append(int(self.rng.choice(others)))
        return tuple(sorted(acts))

    def object_for(self, action):
        opts = self.world.objects_for_action[action]
        return int(opts[self.rng.integers(len(opts))])

    def link(self, h, o, actions, weak):
        self.instances[h]["subject"] = True
        inst = self.instances[o]
        inst["object_actions"] = sorted(set(inst["object_actions"]) | set(actions))
        if weak:
            inst["cue"] = self.cfg.weak_cue
        self.triplets.append((h, o, actions))

    def simple_triplet(self, action=None, obj=None, weak=False):
        if action is None:
            action, obj = self.sample_hoi()
        h = self.random_human()
        acts = self.actions_with(action, obj)
        o = self.place_near(self.instances[h]["box"], obj, self.action_angle(action, weak),
                            self.world.action_dists[action])
        self.link(h, o, acts, weak)
        return action, obj

    def shared_group(self):
        rng, cfg = self.rng, self.cfg
        action, obj = self.sample_hoi()
        if rng.random() < 0.7:
            h = self.random_human()
            n = int(rng.integers(2, 4))
            spread = [0.0, 0.7, -0.7][:n]
            for i in range(n):
                cat = obj if i == 0 else self.object_for(action)
                weak = cfg.cross_triplet and i > 0
                angle = self.action_angle(action, weak) + (0.0 if weak else spread[i])
                o = self.place_near(self.instances[h]["box"], cat, angle,
                                    self.world.action_dists[action])
                self.link(h, o, self.actions_with(action, cat), weak)
        else:
            w, hgt = self.object_size(obj)
            cx, cy = rng.uniform(w / 2, self.W - w / 2), rng.uniform(hgt / 2, self.H - hgt / 2)
            o = self.new_instance(obj, _fit(cx, cy, w, hgt, self.W, self.H))
            acts = self.actions_with(action, obj)
            for i in range(2):
                weak = cfg.cross_triplet and i > 0
                angle = self.action_angle(action, weak) + (0.0 if weak else 0.8 * i)
                h = self.place_near(self.instances[o]["box"], PERSON, angle,
                                    self.world.action_dists[action], sign=-1.0)
                self.link(h, o, acts if i == 0 else self.actions_with(action, obj), False)
        return action, obj

    def distractors(self):
        rng, cfg = self.rng, self.cfg
        n = int(rng.integers(1, cfg.max_distractors + 1))
        for _ in range(n):
            cat = int(rng.integers(1, cfg.num_objects))
            w, h = self.object_size(cat)
            if self.instances and rng.random() < 0.5:
                anchor = self.instances[int(rng.integers(len(self.instances)))]["box"]
                self.place_near(anchor, cat, rng.uniform(0, 2 * math.pi), rng.uniform(0.4, 1.2))
            else:
                cx, cy = rng.uniform(w / 2, self.W - w / 2), rng.uniform(h / 2, self.H - h / 2)
                self.new_instance(cat, _fit(cx, cy, w, h, self.W, self.H))
        if rng.random() < cfg.idle_human_prob:
            self.random_human()

    def jitter(self, box):
        rng = self.rng
        x1, y1, x2, y2 = box
        w, h = x2 - x1, y2 - y1
        for _ in range(100):
            cx = 0.5 * (x1 + x2) + rng.normal(0, 0.05 * w)
            cy = 0.5 * (y1 + y2) + rng.normal(0, 0.05 * h)
            nw, nh = w * math.exp(rng.normal(0, 0.05)), h * math.exp(rng.normal(0, 0.05))
            cand = _fit(cx, cy, nw, nh, self.W, self.H)
            if cand[0] < cand[2] and cand[1] < cand[3] and iou(cand, box) >= self.cfg.jitter_iou:
                return cand
        return box

    def build(self, scene_id, shared):
        cfg, world, rng = self.cfg, self.world, self.rng
        if shared:
            action, obj = self.shared_group()
        else:
            action, obj = self.simple_triplet()
        if rng.random() < cfg.extra_triplet_prob:
            if cfg.cross_triplet and rng.random() < cfg.echo_prob:
                self.simple_triplet(action, obj, weak=True)
            else:
                self.simple_triplet()
        self.distractors()

        in_triplet = {h for h, _, _ in self.triplets} | {o for _, o, _ in self.triplets}
        order = rng.permutation(len(self.instances))
        detections = []
        for i in order:
            inst = self.instances[i]
            centroid = appearance_centroid(world, inst["cat"], inst["subject"],
                                           inst["object_actions"], inst["cue"])
            app = centroid + cfg.appearance_noise * rng.normal(size=cfg.d_app)
            score = rng.uniform(cfg.gt_score_low if i in in_triplet else cfg.score_low, 1.0)
            detections.append(Detection(self.jitter(inst["box"]), inst["cat"], float(round(score, 4)),
                                        _f32(app)))

        S = cfg.map_size
        fmap = cfg.map_noise * rng.normal(size=(S, S, cfg.d_map))
        cw, ch = self.W / S, self.H / S
        for h, o, acts in self.triplets:
            hb, ob = self.instances[h]["box"], self.instances[o]["box"]
            ux1, uy1 = min(hb[0], ob[0]), min(hb[1], ob[1])
            ux2, uy2 = max(hb[2], ob[2]), max(hb[3], ob[3])
            c1, c2 = int(ux1 // cw), min(int(math.ceil(ux2 / cw)), S)
            r1, r2 = int(uy1 // ch), min(int(math.ceil(uy2 / ch)), S)
            fmap[r1:r2, c1:c2] += cfg.map_cue * world.action_maps[list(acts)].mean(axis=0)

        triplets = [
            GtTriplet(self.instances[h]["box"], self.instances[o]["box"],
                      self.instances[o]["cat"], tuple(acts))
            for h, o, acts in self.triplets
        ]
        return Scene(scene_id, (self.W, self.H), detections, _f32(fmap), triplets)


def _shared_set(cfg, split, n):
    k = int(round(cfg.shared_fraction * n))
    perm = np.random.default_rng([cfg.seed, split, 104729]).permutation(n)
    return set(perm[:k].tolist())


def generate_split(cfg, world, split, n):
    shared = _shared_set(cfg, split, n)
    name = "train" if split == TRAIN else "test"
    scenes = []
    for i in range(n):
        rng = np.random.default_rng([cfg.seed, split, i])
        scenes.append(_SceneBuilder(cfg, world, rng).build(f"{name}-{i:05d}", i in shared))
    return scenes


def hoi_counts(scenes, vocab):
    counts = np.zeros(vocab.num_hoi, dtype=np.int64)
    for s in scenes:
        for t in s.gt_triplets:
            for a in t.actions:
                counts[vocab.hoi_index(a, t.object_category)] += 1
    return counts


def rarity_flags(counts):
    """Bottom quartile of categories by instance count is rare (ties by index)."""
    n = len(counts)
    order = sorted(range(n), key=lambda i: (counts[i], i))
    rare = [False] * n
    for i in order[: max(n // 4, 1)]:
        rare[i] = True
    return rare


def generate_dataset(cfg=None, **overrides):
    """Return ``(train_scenes, test_scenes, vocabulary)``; deterministic per seed."""
    if cfg is None:
        cfg = GeneratorConfig(**overrides)
    elif overrides:
        cfg = GeneratorConfig(**{**cfg.to_dict(), **overrides})
    world = build_world(cfg)
    train = generate_split(cfg, world, TRAIN, cfg.num_train)
    test = generate_split(cfg, world, TEST, cfg.num_test)
    vocab = HoiVocabulary(cfg.num_objects, cfg.num_actions, world.hois, [False] * len(world.hois),
                          world.text_embeddings)
    vocab.rare = rarity_flags(hoi_counts(train, vocab))
    return train, test, vocab


def has_shared_instance(scene):
    """True if two ground-truth triplets share a human box or an object box."""
    ts = scene.gt_triplets
    for i in range(len(ts)):
        for j in range(i + 1, len(ts)):
            if ts[i].human_box == ts[j].human_box or ts[i].object_box == ts[j].object_box:
                return True
    return False
