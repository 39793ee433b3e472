"""Synthetic scenes standing in for detector, backbone and text-encoder outputs."""

from sctc.fixtures.generate import (
    GeneratorConfig,
    appearance_centroid,
    build_world,
    generate_dataset,
    has_shared_instance,
    hoi_counts,
    rarity_flags,
)
from sctc.fixtures.io import (
    load_dataset,
    save_dataset,
    load_scene,
    load_vocabulary,
    save_scene,
    save_vocabulary,
    scene_from_bytes,
    scene_to_bytes,
)
from sctc.fixtures.types import PERSON, Detection, GtTriplet, HoiVocabulary, Scene

__all__ = [
    "PERSON", "Detection", "GeneratorConfig", "GtTriplet", "HoiVocabulary", "Scene",
    "appearance_centroid", "build_world", "generate_dataset", "has_shared_instance",
    "hoi_counts", "load_dataset", "load_scene", "load_vocabulary", "rarity_flags", "save_dataset", "save_scene",
    "save_vocabulary", "scene_from_bytes", "scene_to_bytes",
]
