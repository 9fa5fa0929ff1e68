"""On-disk embedding format, task manifests, and the task-stream view.

The binary layout (magic ``FLYE``) is the contract shared with external
feature extractors:

    magic   4 bytes  b"FLYE"
    version u32      1
    flags   u32      bit 0 set when class names are present
    n       u64      sample count
    d       u32      feature dimension
    classes u32      number of classes
    features n*d float32, row major, little endian
    labels   n  uint32
    names    classes x (u32 byte length + UTF-8 bytes), only if flag bit 0

Features are stored float32 and widened to float64 on load; all downstream
accumulation is double precision.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import (
    BadMagic,
    ClassTooSmall,
    EmptyDataset,
    NonFiniteValue,
    OverlappingTasks,
    TruncatedFile,
    UnknownClass,
    VersionMismatch,
)

MAGIC = b"FLYE"
VERSION = 1
_HEADER = struct.Struct("<4sIIQII")


@dataclass
class EmbeddingDataset:
    """Labeled feature vectors; the unit every pipeline stage consumes."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int64, values in [0, num_classes)
    num_classes: int
    class_names: list[str] | None = None

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        if self.n == 0:
            raise EmptyDataset("dataset has no samples")
        if self.dim == 0:
            raise EmptyDataset("dataset has zero feature dimension")
        if len(self.labels) != self.n:
            raise EmptyDataset(
                f"label count {len(self.labels)} != sample count {self.n}")
        bad = ~np.isfinite(self.features)
        if bad.any():
            raise NonFiniteValue(int(np.nonzero(bad.any(axis=1))[0][0]))
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= self.num_classes:
            raise UnknownClass(int(self.labels.max()))
        if self.class_names is not None and len(self.class_names) != self.num_classes:
            raise EmptyDataset("class_names length != num_classes")


@dataclass
class TaskManifest:
    """Ordered disjoint class groups defining the incremental stream."""

    tasks: list[list[int]]
    dataset: str = ""
    seed: int = 0
    classes_per_task: int = 0
    extra: dict = field(default_factory=dict)

    def validate(self, num_classes: int | None = None) -> None:
        seen: set[int] = set()
        for task in self.tasks:
            for cls in task:
                if cls in seen:
                    raise OverlappingTasks(cls)
                seen.add(cls)
        if num_classes is not None:
            for cls in sorted(seen):
                if cls < 0 or cls >= num_classes:
                    raise UnknownClass(cls)

    def all_classes(self) -> list[int]:
        return [cls for task in self.tasks for cls in task]


@dataclass
class TaskBatch:
    features: np.ndarray  # (n_t, d)
    labels: np.ndarray    # (n_t,) global class ids
    task_index: int
    cumulative_classes: int  # classes seen through this task


def write_embedding_file(dataset: EmbeddingDataset, path) -> None:
    dataset.validate()
    flags = 1 if dataset.class_names else 0
    feats = np.ascontiguousarray(dataset.features, dtype="<f4")
    labels = np.ascontiguousarray(dataset.labels, dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, flags, dataset.n, dataset.dim,
                              dataset.num_classes))
        fh.write(feats.tobytes())
        fh.write(labels.tobytes())
        if flags & 1:
            for name in dataset.class_names:
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)


def _take(buf: bytes, offset: int, count: int) -> bytes:
    if offset + count > len(buf):
        raise TruncatedFile(offset, count, len(buf) - offset)
    return buf[offset:offset + count]


def read_embedding_file(path) -> EmbeddingDataset:
    with open(path, "rb") as fh:
        buf = fh.read()
    head = _take(buf, 0, _HEADER.size)
    magic, version, flags, n, d, num_classes = _HEADER.unpack(head)
    if magic != MAGIC:
        raise BadMagic(magic)
    if version != VERSION:
        raise VersionMismatch(version, VERSION)
    off = _HEADER.size
    feat_bytes = _take(buf, off, n * d * 4)
    off += n * d * 4
    features = np.frombuffer(feat_bytes, dtype="<f4").reshape(n, d).astype(np.float64)
    label_bytes = _take(buf, off, n * 4)
    off += n * 4
    labels = np.frombuffer(label_bytes, dtype="<u4").astype(np.int64)
    names = None
    if flags & 1:
        names = []
        for _ in range(num_classes):
            (ln,) = struct.unpack("<I", _take(buf, off, 4))
            off += 4
            names.append(_take(buf, off, ln).decode("utf-8"))
            off += ln
    ds = EmbeddingDataset(features, labels, int(num_classes), names)
    ds.validate()
    return ds


def split_tasks(dataset: EmbeddingDataset, manifest: TaskManifest) -> list[TaskBatch]:
    """Carve the dataset into the ordered task stream defined by the manifest.

    Batch t holds exactly the samples whose label is in task t's class set,
    in dataset order; the cumulative class count is the running total.
    """
    manifest.validate(dataset.num_classes)
    batches = []
    cumulative = 0
    for t, classes in enumerate(manifest.tasks):
        cumulative += len(classes)
        mask = np.isin(dataset.labels, classes)
        batches.append(TaskBatch(
            features=dataset.features[mask],
            labels=dataset.labels[mask],
            task_index=t,
            cumulative_classes=cumulative,
        ))
    return batches


def holdout_split(dataset: EmbeddingDataset, fraction: float, seed: int):
    """Per-class stratified split into (train, test); deterministic in seed.

    ``fraction`` is the test share.  Each class keeps at least one sample on
    both sides, which requires every class present to have >= 2 samples.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    test_mask = np.zeros(dataset.n, dtype=bool)
    for cls in np.unique(dataset.labels):
        idx = np.nonzero(dataset.labels == cls)[0]
        if len(idx) < 2:
            raise ClassTooSmall(int(cls), len(idx))
        perm = rng.permutation(seed, rng.STREAM_SPLIT, len(idx), tag=int(cls))
        n_test = int(round(len(idx) * fraction))
        n_test = min(max(n_test, 1), len(idx) - 1)
        test_mask[idx[perm[:n_test]]] = True
    train = EmbeddingDataset(dataset.features[~test_mask], dataset.labels[~test_mask],
                             dataset.num_classes, dataset.class_names)
    test = EmbeddingDataset(dataset.features[test_mask], dataset.labels[test_mask],
                            dataset.num_classes, dataset.class_names)
    return train, test


def save_manifest(manifest: TaskManifest, path) -> None:
    import json

    doc = {
        "dataset": manifest.dataset,
        "seed": manifest.seed,
        "classes_per_task": manifest.classes_per_task,
        "tasks": manifest.tasks,
    }
    doc.update(manifest.extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_manifest(path) -> TaskManifest:
    import json

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    known = {"dataset", "seed", "classes_per_task", "tasks"}
    manifest = TaskManifest(
        tasks=[[int(c) for c in task] for task in doc["tasks"]],
        dataset=doc.get("dataset", ""),
        seed=int(doc.get("seed", 0)),
        classes_per_task=int(doc.get("classes_per_task", 0)),
        extra={k: v for k, v in doc.items() if k not in known},
    )
    manifest.validate()
    return manifest


def make_manifest(num_classes: int, num_tasks: int, classes_per_task: int,
                  seed: int, dataset: str = "") -> TaskManifest:
    """Shuffle classes by seed and group them into disjoint tasks."""
    if num_tasks * classes_per_task > num_classes:
        raise UnknownClass(num_tasks * classes_per_task - 1)
    order = rng.permutation(seed, rng.STREAM_SHUFFLE, num_classes)
    tasks = [
        [int(order[t * classes_per_task + i]) for i in range(classes_per_task)]
        for t in range(num_tasks)
    ]
    return TaskManifest(tasks=tasks, dataset=dataset, seed=seed,
                        classes_per_task=classes_per_task)
