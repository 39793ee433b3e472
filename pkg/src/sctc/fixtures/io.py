"""Scene and vocabulary files."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from sctc.errors import ParseError
from sctc.fixtures import container
from sctc.fixtures.types import Detection, GtTriplet, HoiVocabulary, Scene

SCENE_FORMAT = "hoi-scene/1"
VOCAB_FORMAT = "hoi-vocabulary/1"


def scene_to_bytes(scene):
    meta = {
        "format": SCENE_FORMAT,
        "id": scene.id,
        "image_size": list(scene.image_size),
        "detections": [
            {"box": list(map(float, d.box)), "category": int(d.category), "score": float(d.score)}
            for d in scene.detections
        ],
        "gt_triplets": [
            {
                "human_box": list(map(float, t.human_box)),
                "object_box": list(map(float, t.object_box)),
                "object_category": int(t.object_category),
                "actions": [int(a) for a in t.actions],
            }
            for t in scene.gt_triplets
        ],
    }
    d_app = scene.detections[0].appearance.shape[0] if scene.detections else 0
    app = np.stack([d.appearance for d in scene.detections]) if scene.detections else np.zeros((0, d_app))
    return container.dumps(meta, {"appearance": app, "feature_map": scene.feature_map})


def scene_from_bytes(buf):
    meta, tensors = container.loads(buf)
    if meta.get("format") != SCENE_FORMAT:
        raise ParseError(f"not a scene file (format {meta.get('format')!r})", offset=0, field="format")
    for key in ("appearance", "feature_map"):
        if key not in tensors:
            raise ParseError("missing tensor", offset=0, field=key)
    try:
        dets_meta = meta["detections"]
        app = tensors["appearance"]
        if app.shape[0] != len(dets_meta):
            raise ParseError(
                f"appearance rows {app.shape[0]} != detections {len(dets_meta)}",
                offset=0, field="appearance",
            )
        detections = [
            Detection(tuple(d["box"]), int(d["category"]), float(d["score"]), app[i])
            for i, d in enumerate(dets_meta)
        ]
        triplets = [
            GtTriplet(tuple(t["human_box"]), tuple(t["object_box"]),
                      int(t["object_category"]), tuple(int(a) for a in t["actions"]))
            for t in meta["gt_triplets"]
        ]
        scene = Scene(str(meta["id"]), tuple(meta["image_size"]), detections,
                      tensors["feature_map"], triplets)
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"malformed scene header: {exc!r}", offset=0, field="header") from None
    scene.validate()
    return scene


def save_scene(scene, path):
    with open(path, "wb") as fh:
        fh.write(scene_to_bytes(scene))


def load_scene(path):
    with open(path, "rb") as fh:
        return scene_from_bytes(fh.read())


def save_vocabulary(vocab, path):
    meta = {
        "format": VOCAB_FORMAT,
        "num_objects": vocab.num_objects,
        "num_actions": vocab.num_actions,
        "hois": [list(h) for h in vocab.hois],
        "rare": list(vocab.rare),
        "prompts": [vocab.prompt(i) for i in range(len(vocab.text_embeddings))],
    }
    container.write(path, meta, {"text_embeddings": vocab.text_embeddings})


def load_vocabulary(path):
    meta, tensors = container.read(path)
    if meta.get("format") != VOCAB_FORMAT:
        raise ParseError(f"not a vocabulary file (format {meta.get('format')!r})", offset=0, field="format")
    if "text_embeddings" not in tensors:
        raise ParseError("missing tensor", offset=0, field="text_embeddings")
    return HoiVocabulary(meta["num_objects"], meta["num_actions"], meta["hois"], meta["rare"],
                         tensors["text_embeddings"])


MANIFEST = "manifest.json"
DATASET_FORMAT = "hoi-dataset/1"
SPLITS = ("train", "test")


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def save_dataset(root, train, test, vocab, generator=None):
    """Write ``root/{train,test}/<id>.scene``, ``root/vocabulary.bin`` and a manifest.

    The manifest records per-split scene and triplet counts and a SHA-256
    for every file written. Returns the manifest dict.
    """
    root = Path(root)
    files = {}
    splits = {}
    for split, scenes in zip(SPLITS, (train, test)):
        (root / split).mkdir(parents=True, exist_ok=True)
        names = []
        for s in scenes:
            rel = f"{split}/{s.id}.scene"
            save_scene(s, root / rel)
            files[rel] = _sha256(root / rel)
            names.append(rel)
        splits[split] = {"scenes": names, "num_scenes": len(scenes),
                         "num_triplets": sum(len(s.gt_triplets) for s in scenes)}
    save_vocabulary(vocab, root / "vocabulary.bin")
    files["vocabulary.bin"] = _sha256(root / "vocabulary.bin")
    manifest = {"format": DATASET_FORMAT, "generator": generator, "splits": splits,
                "num_hoi": vocab.num_hoi, "num_rare": int(sum(vocab.rare)), "sha256": files}
    (root / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def load_dataset(root):
    """Inverse of :func:`save_dataset`: ``(train, test, vocab, manifest)``."""
    root = Path(root)
    try:
        manifest = json.loads((root / MANIFEST).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed manifest: {exc.msg}", offset=exc.pos, field=MANIFEST) from None
    if manifest.get("format") != DATASET_FORMAT:
        raise ParseError(f"not a dataset manifest (format {manifest.get('format')!r})",
                         offset=0, field="format")
    splits = []
    for split in SPLITS:
        splits.append([load_scene(root / rel) for rel in manifest["splits"][split]["scenes"]])
    vocab = load_vocabulary(root / "vocabulary.bin")
    return splits[0], splits[1], vocab, manifest
