"""Writers for the FLYE embedding container and the task-manifest JSON.

This is an independent implementation of the engine's file contracts; the
engine's `validate` subcommand is the compatibility oracle.

FLYE layout (little endian): magic "FLYE", u32 version=1, u32 flags (bit 0 =
class names present), u64 n, u32 d, u32 num_classes, n*d float32 row-major
features, n uint32 labels, then optionally num_classes length-prefixed UTF-8
names.
"""

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"FLYE"
VERSION = 1
_HEADER = struct.Struct("<4sIIQII")


def write_flye(path, features: np.ndarray, labels: np.ndarray,
               num_classes: int, class_names=None) -> None:
    """Atomically write an embedding file."""
    features = np.ascontiguousarray(features, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    n, d = features.shape
    if n == 0:
        raise ValueError("refusing to write an empty embedding file")
    if len(labels) != n:
        raise ValueError(f"label count {len(labels)} != sample count {n}")
    if labels.max(initial=0) >= num_classes:
        raise ValueError("label outside [0, num_classes)")
    flags = 1 if class_names else 0
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)),
                               suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, flags, n, d, num_classes))
            fh.write(features.tobytes())
            fh.write(labels.tobytes())
            if flags:
                for name in class_names:
                    raw = str(name).encode("utf-8")
                    fh.write(struct.pack("<I", len(raw)))
                    fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(path, tasks, seed: int, classes_per_task: int,
                   dataset: str = "") -> None:
    doc = {
        "dataset": dataset,
        "seed": seed,
        "classes_per_task": classes_per_task,
        "tasks": [[int(c) for c in task] for task in tasks],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def make_task_groups(num_classes: int, num_tasks: int, classes_per_task: int,
                     seed: int):
    """Seed-shuffled disjoint class groups."""
    if num_tasks * classes_per_task > num_classes:
        raise ValueError(
            f"{num_tasks} tasks x {classes_per_task} classes > {num_classes} classes")
    order = np.random.default_rng(seed).permutation(num_classes)
    return [order[t * classes_per_task:(t + 1) * classes_per_task].tolist()
            for t in range(num_tasks)]


def write_sidecar(path, total_seconds: float, tasks: int, meta: dict) -> None:
    """Timing sidecar consumed by the engine's tau_post accounting."""
    doc = {
        "extraction_seconds_total": total_seconds,
        "extraction_seconds_per_task": total_seconds / max(tasks, 1),
        "tasks": tasks,
    }
    doc.update(meta)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
