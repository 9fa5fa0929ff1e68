"""Sparse random expansion and winner-take-all sparsification.

The projection matrix has exactly p nonzero weights per expanded row, at
column positions drawn uniformly without replacement, with standard-normal
weights.  It is always regenerated from (seed, m, d, p) via the counter-based
generator, never serialized; reconstruction is bit-identical.

Weights are materialized in float32 (their canonical precision) and widened
to float64 for all arithmetic, halving the memory stream of the hot kernel
without changing any numeric contract downstream.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels, rng
from .errors import DimensionMismatch, InvalidK, InvalidShape

_CHUNK = 48  # must match the compiled kernel's column chunk


@dataclass
class SparseProjectionMatrix:
    expanded_dim: int          # m
    dim: int                   # d
    nnz_per_row: int           # p
    indices: np.ndarray        # (m, p) int32, sorted ascending per row
    weights_f32: np.ndarray    # (m, p) float32
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def weights(self) -> np.ndarray:
        """Weights widened to float64 (cached)."""
        if "w64" not in self._cache:
            self._cache["w64"] = self.weights_f32.astype(np.float64)
        return self._cache["w64"]

    def packed_indices(self) -> np.ndarray:
        if "u16" not in self._cache:
            self._cache["u16"] = np.ascontiguousarray(self.indices, dtype=np.uint16)
        return self._cache["u16"]

    def chunk_offsets(self) -> np.ndarray:
        """Per row, slice bounds of its entries within each column chunk."""
        if "choff" not in self._cache:
            nchunk = (self.dim + _CHUNK - 1) // _CHUNK
            edges = np.arange(nchunk + 1, dtype=np.int64) * _CHUNK
            counts = self.indices[:, :, None] < edges[None, None, :]
            self._cache["choff"] = np.ascontiguousarray(
                counts.sum(axis=1), dtype=np.int32)
        return self._cache["choff"]

    def to_csr(self) -> sp.csr_matrix:
        if "csr" not in self._cache:
            m, p = self.indices.shape
            indptr = np.arange(0, m * p + 1, p, dtype=np.int64)
            self._cache["csr"] = sp.csr_matrix(
                (self.weights.ravel(), self.indices.ravel().astype(np.int64), indptr),
                shape=(m, self.dim))
        return self._cache["csr"]

    def densify(self) -> np.ndarray:
        """Dense (m x d) float64 copy, used by oracles and the dense baseline."""
        dense = np.zeros((self.expanded_dim, self.dim), dtype=np.float64)
        np.put_along_axis(dense, self.indices.astype(np.int64), self.weights, axis=1)
        return dense


def build_projection(seed: int, m: int, d: int, p: int) -> SparseProjectionMatrix:
    """Deterministic sparse projection matrix for (seed, m, d, p)."""
    if not (0 < p < d < m):
        raise InvalidShape(f"need 0 < p < d < m, got p={p}, d={d}, m={m}")
    keys = rng.raw64(seed, rng.STREAM_COLUMNS, 0, m * d).reshape(m, d)
    idx = np.argpartition(keys, p - 1, axis=1)[:, :p]
    idx.sort(axis=1)
    weights = rng.normals(seed, rng.STREAM_WEIGHTS, 0, m * p)
    return SparseProjectionMatrix(
        expanded_dim=m,
        dim=d,
        nnz_per_row=p,
        indices=np.ascontiguousarray(idx, dtype=np.int32),
        weights_f32=np.ascontiguousarray(weights.reshape(m, p), dtype=np.float32),
        seed=seed,
    )


def project_batch(W: SparseProjectionMatrix, V: np.ndarray) -> np.ndarray:
    """Row-wise projection of V (n x d) to (n x m); exactly m*p multiply-adds per row."""
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != W.dim:
        raise DimensionMismatch(W.dim, V.shape[1] if V.ndim == 2 else V.shape, "sample")
    if not np.isfinite(V).all():
        raise DimensionMismatch(W.dim, "non-finite", "sample")
    return kernels.project_batch(W, V)


def project(W: SparseProjectionMatrix, v: np.ndarray) -> np.ndarray:
    """Single-vector projection; identical to the batch path on one row."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != W.dim:
        raise DimensionMismatch(W.dim, v.shape, "sample")
    return project_batch(W, v[None, :])[0]


@dataclass
class SparseActivation:
    """Winner-take-all activation: the k surviving (index, value) pairs."""

    dim: int
    indices: np.ndarray  # strictly increasing
    values: np.ndarray

    def densify(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float64)
        out[self.indices] = self.values
        return out


@dataclass
class ActivationBatch:
    """CSR view of per-sample sparse activations."""

    n: int
    dim: int
    indptr: np.ndarray   # (n+1,) int64
    indices: np.ndarray  # int32, ascending within each row
    values: np.ndarray   # float64
    _cache: dict = field(default_factory=dict, repr=False)

    def packed_indices(self) -> np.ndarray:
        if "u16" not in self._cache:
            self._cache["u16"] = np.ascontiguousarray(self.indices, dtype=np.uint16)
        return self._cache["u16"]

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.indices.astype(np.int64), self.indptr),
            shape=(self.n, self.dim))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.dim), dtype=np.float64)
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out[rows, self.indices] = self.values
        return out

    def row(self, s: int) -> SparseActivation:
        lo, hi = self.indptr[s], self.indptr[s + 1]
        return SparseActivation(self.dim, self.indices[lo:hi].astype(np.int64),
                                self.values[lo:hi].copy())


def top_k_batch(H: np.ndarray, k: int) -> ActivationBatch:
    """Keep the k largest-magnitude entries per row, zeros elsewhere.

    Signed values are retained.  Magnitude ties at the cut are broken by
    keeping lower indices first.  Exactly zero entries are never retained, so
    a row keeps min(k, its nonzero count) entries.
    """
    H = np.asarray(H, dtype=np.float64)
    n, m = H.shape
    if not 1 <= k <= m:
        raise InvalidK(k, m)
    A = np.abs(H)
    if k == m:
        mask = A > 0
    else:
        thr = np.partition(A, m - k, axis=1)[:, m - k]
        above = A > thr[:, None]
        at = A == thr[:, None]
        need = k - above.sum(axis=1)
        rank_at = np.cumsum(at, axis=1)
        mask = above | (at & (rank_at <= need[:, None]))
        mask &= A > 0
    counts = mask.sum(axis=1)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    rows, cols = np.nonzero(mask)
    return ActivationBatch(
        n=n, dim=m,
        indptr=indptr,
        indices=np.ascontiguousarray(cols, dtype=np.int32),
        values=np.ascontiguousarray(H[rows, cols]),
    )


def top_k(h: np.ndarray, k: int) -> SparseActivation:
    """Single-vector winner-take-all; same rules as the batch form."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1:
        raise DimensionMismatch(1, h.ndim, "activation rank")
    return top_k_batch(h[None, :], k).row(0)


def sparsification_residual(h: np.ndarray, k: int) -> float:
    """Energy fraction removed by top-k: ||h - h'||^2 / ||h||^2 (0 for h = 0)."""
    h = np.asarray(h, dtype=np.float64)
    total = float(h @ h)
    if total == 0.0:
        return 0.0
    kept = top_k(h, k)
    return float(max(0.0, total - kept.values @ kept.values) / total)
