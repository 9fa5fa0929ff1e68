"""Offline image-to-embedding extraction for the streaming classifier engine.

Turns image datasets into FLYE embedding files using frozen pretrained
vision backbones, records extraction time in a sidecar for downstream timing
accounting, and writes task manifests.
"""

from .extract import (
    BACKBONES,
    NORMALIZATIONS,
    DatasetNotFound,
    ExtractionJob,
    ModelLoadError,
    ShapeMismatch,
    build_transform,
    extract,
    load_backbone,
    preprocess_hash,
)
from .formats import make_task_groups, write_flye, write_manifest, write_sidecar

__version__ = "0.1.0"
