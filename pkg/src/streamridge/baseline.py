"""Nearest-class-mean baseline: streaming per-class means with cosine scoring."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyBank, ZeroVector


@dataclass
class PrototypeBank:
    """Per-class running sums and counts; the mean is sum/count on demand."""

    dim: int
    sums: dict[int, np.ndarray] = field(default_factory=dict)
    counts: dict[int, int] = field(default_factory=dict)

    def classes(self) -> list[int]:
        return sorted(self.sums)

    def prototype(self, cls: int) -> np.ndarray:
        return self.sums[cls] / self.counts[cls]

    def prototype_matrix(self):
        """(classes, (c, dim) matrix of means) in ascending class order."""
        ids = self.classes()
        if not ids:
            raise EmptyBank("no prototypes accumulated")
        mat = np.stack([self.prototype(c) for c in ids])
        return ids, mat


def accumulate_prototypes(bank: PrototypeBank, features: np.ndarray,
                          labels: np.ndarray) -> PrototypeBank:
    """Streaming mean update; sums and counts are kept exactly."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != bank.dim:
        raise DimensionMismatch(bank.dim, features.shape, "feature")
    labels = np.asarray(labels)
    if len(labels) != features.shape[0]:
        raise DimensionMismatch(features.shape[0], len(labels), "label count")
    for cls in np.unique(labels):
        sel = features[labels == cls]
        key = int(cls)
        if key in bank.sums:
            bank.sums[key] = bank.sums[key] + sel.sum(axis=0)
            bank.counts[key] += len(sel)
        else:
            bank.sums[key] = sel.sum(axis=0)
            bank.counts[key] = len(sel)
    return bank


def cosine_predict_batch(bank: PrototypeBank, V: np.ndarray) -> np.ndarray:
    """argmax of cosine similarity against every prototype; ties go to the
    lowest class id and zero-norm prototypes score -inf."""
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != bank.dim:
        raise DimensionMismatch(bank.dim, V.shape, "query")
    ids, protos = bank.prototype_matrix()
    vnorm = np.linalg.norm(V, axis=1)
    if np.any(vnorm == 0):
        raise ZeroVector("query vector has zero norm")
    pnorm = np.linalg.norm(protos, axis=1)
    sims = (V @ protos.T) / vnorm[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = np.where(pnorm[None, :] > 0, sims / pnorm[None, :], -np.inf)
    best = np.argmax(sims, axis=1)
    return np.asarray(ids, dtype=np.int64)[best]


def cosine_predict(bank: PrototypeBank, v: np.ndarray) -> int:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(1, v.ndim, "query rank")
    return int(cosine_predict_batch(bank, v[None, :])[0])
