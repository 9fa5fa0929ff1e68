"""Streaming ridge classifier with adaptive regularization.

State accumulates the Gram matrix G and class cross-statistics S over the
task stream; prototypes C solve (G + lambda*I) C = S via Cholesky.  The
penalty is selected per task by generalized cross-validation computed from a
thin SVD of the task's activation matrix, so no candidate requires a full
m x m solve.

All accumulation is float64: G collects n_t * m^2 products per task and
conditioning degrades as tasks accumulate.
"""

import struct
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels
from .errors import (
    BadMagic,
    DegenerateInput,
    DimensionMismatch,
    NotPositiveDefinite,
    TruncatedFile,
    Unsolved,
    VersionMismatch,
)
from .projector import SparseProjectionMatrix, project_batch, top_k_batch

CHECKPOINT_MAGIC = b"FLYS"
CHECKPOINT_VERSION = 1


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Dense float64 indicator matrix; labels are class-column indices."""
    labels = np.asarray(labels)
    Y = np.zeros((len(labels), num_classes), dtype=np.float64)
    Y[np.arange(len(labels)), labels] = 1.0
    return Y


@dataclass
class RidgeState:
    expanded_dim: int
    G: np.ndarray                 # (m, m) accumulated H^T H
    S: np.ndarray                 # (m, c_t) accumulated H^T Y
    C: np.ndarray | None = None   # (m, c_t) solved prototypes, None when stale
    lambda_history: list[float] = field(default_factory=list)
    class_ids: list[int] = field(default_factory=list)  # column -> global class id
    tasks_seen: int = 0

    @property
    def classes_seen(self) -> int:
        return len(self.class_ids)


def new_state(m: int) -> RidgeState:
    return RidgeState(expanded_dim=m,
                      G=np.zeros((m, m), dtype=np.float64),
                      S=np.zeros((m, 0), dtype=np.float64))


def _grow_columns(state: RidgeState, new_total: int) -> None:
    if new_total <= state.S.shape[1]:
        return
    pad = np.zeros((state.expanded_dim, new_total - state.S.shape[1]))
    state.S = np.hstack([state.S, pad])


def map_labels(state: RidgeState, labels: np.ndarray) -> np.ndarray:
    """Map global class ids to prototype columns, assigning new columns in
    order of first appearance."""
    lookup = {cls: j for j, cls in enumerate(state.class_ids)}
    cols = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(np.asarray(labels).tolist()):
        j = lookup.get(lab)
        if j is None:
            j = len(lookup)
            lookup[lab] = j
            state.class_ids.append(lab)
        cols[i] = j
    return cols


def update_stats(state: RidgeState, H: np.ndarray, labels: np.ndarray,
                 num_classes: int | None = None) -> RidgeState:
    """G += H^T H;  S += H^T Y (zero-padded to the new class count)."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != state.expanded_dim:
        raise DimensionMismatch(state.expanded_dim, H.shape, "activation")
    labels = np.asarray(labels)
    if len(labels) != H.shape[0]:
        raise DimensionMismatch(H.shape[0], len(labels), "label count")
    c_t = state.S.shape[1]
    if len(labels):
        c_t = max(c_t, int(labels.max()) + 1)
    if num_classes is not None:
        c_t = max(c_t, num_classes)
    _grow_columns(state, c_t)
    state.G += H.T @ H
    if len(labels):
        Y = one_hot(labels, c_t)
        state.S += H.T @ Y
    state.C = None
    return state


@dataclass
class GcvReport:
    grid: np.ndarray             # candidate penalties, ascending
    df: np.ndarray               # effective degrees of freedom per candidate
    gcv: np.ndarray              # criterion value per candidate (inf = excluded)
    lambda_star: float
    singular_values: np.ndarray


def gcv_select(H: np.ndarray, labels: np.ndarray, num_classes: int,
               grid: np.ndarray) -> GcvReport:
    """Pick the ridge penalty by generalized cross-validation.

    With the thin SVD H = U diag(s) V^T, each candidate costs O(r) for the
    shrinkage factors plus O(n r c) to reconstruct fitted targets:

        df(lam)  = sum_i s_i^2 / (s_i^2 + lam)
        Yhat     = U diag(s^2/(s^2+lam)) U^T Y
        GCV(lam) = ||Y - Yhat||_F^2 / (n (1 - df/n)^2)

    Candidates with df >= n are assigned +inf; ties pick the larger penalty.
    """
    H = np.asarray(H, dtype=np.float64)
    n = H.shape[0]
    if n < 2:
        raise DegenerateInput(f"need at least 2 samples for selection, got {n}")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise DegenerateInput("penalty grid must be nonempty, positive, strictly ascending")
    Y = one_hot(labels, num_classes)
    U, s, _ = np.linalg.svd(H, full_matrices=False)
    UtY = U.T @ Y
    s2 = s * s
    df = np.empty(len(grid))
    gcv = np.empty(len(grid))
    for i, lam in enumerate(grid):
        D = s2 / (s2 + lam)
        df[i] = D.sum()
        if df[i] >= n:
            gcv[i] = np.inf
            continue
        Yhat = U @ (D[:, None] * UtY)
        rss = float(((Y - Yhat) ** 2).sum())
        gcv[i] = rss / (n * (1.0 - df[i] / n) ** 2)
    if not np.isfinite(gcv).any():
        raise DegenerateInput("every candidate penalty has df >= n")
    best = len(gcv) - 1 - int(np.argmin(gcv[::-1]))
    return GcvReport(grid=grid, df=df, gcv=gcv, lambda_star=float(grid[best]),
                     singular_values=s)


def solve_prototypes(state: RidgeState, lam: float) -> RidgeState:
    """Solve (G + lam*I) C = S via Cholesky and two triangular solves."""
    if lam <= 0:
        raise NotPositiveDefinite(f"penalty must be positive, got {lam}")
    A = state.G + lam * np.eye(state.expanded_dim)
    try:
        factor = sla.cho_factor(A, lower=True, overwrite_a=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    state.C = sla.cho_solve(factor, state.S, check_finite=False)
    state.lambda_history.append(float(lam))
    return state


def solve_prototypes_lu(state: RidgeState, lam: float) -> RidgeState:
    """Baseline LU solve of the same system; used by the vanilla pipeline."""
    if lam <= 0:
        raise NotPositiveDefinite(f"penalty must be positive, got {lam}")
    A = state.G + lam * np.eye(state.expanded_dim)
    factor = sla.lu_factor(A, overwrite_a=True, check_finite=False)
    state.C = sla.lu_solve(factor, state.S, check_finite=False)
    state.lambda_history.append(float(lam))
    return state


@dataclass
class StageTimings:
    projection: float = 0.0
    sparsify: float = 0.0
    stats: float = 0.0
    selection: float = 0.0
    solve: float = 0.0

    @property
    def total(self) -> float:
        return self.projection + self.sparsify + self.stats + self.selection + self.solve


def train_task(state: RidgeState, W: SparseProjectionMatrix, batch, grid, k: int):
    """One full task update: project, sparsify, accumulate, select, solve.

    Penalty selection uses only this task's activation matrix, while the
    solve runs against the full accumulated statistics.
    Returns (state, GcvReport, StageTimings).
    """
    t0 = time.perf_counter()
    H = project_batch(W, batch.features)
    t1 = time.perf_counter()
    acts = top_k_batch(H, k)
    Hk = acts.to_dense()
    t2 = time.perf_counter()
    cols = map_labels(state, batch.labels)
    update_stats(state, Hk, cols, num_classes=len(state.class_ids))
    t3 = time.perf_counter()
    report = gcv_select(Hk, cols, state.classes_seen, grid)
    t4 = time.perf_counter()
    solve_prototypes(state, report.lambda_star)
    t5 = time.perf_counter()
    state.tasks_seen += 1
    timings = StageTimings(projection=t1 - t0, sparsify=t2 - t1, stats=t3 - t2,
                           selection=t4 - t3, solve=t5 - t4)
    return state, report, timings


def train_online(state: RidgeState, W: SparseProjectionMatrix, batch_stream,
                 grid, k: int, solve_every: int = 1) -> RidgeState:
    """Per-batch streaming mode: update statistics every batch, re-solve the
    prototypes every ``solve_every`` batches with the penalty selected on the
    current batch.  Final (G, S) is identical to task-mode on the same data."""
    pending = False
    Hk = cols = None
    for b, batch in enumerate(batch_stream):
        H = project_batch(W, batch.features)
        acts = top_k_batch(H, k)
        Hk = acts.to_dense()
        cols = map_labels(state, batch.labels)
        update_stats(state, Hk, cols, num_classes=len(state.class_ids))
        pending = True
        if (b + 1) % solve_every == 0:
            report = gcv_select(Hk, cols, state.classes_seen, grid)
            solve_prototypes(state, report.lambda_star)
            pending = False
        state.tasks_seen += 1
    if pending and Hk is not None:
        report = gcv_select(Hk, cols, state.classes_seen, grid)
        solve_prototypes(state, report.lambda_star)
    return state


def predict_batch(state: RidgeState, W: SparseProjectionMatrix, V: np.ndarray,
                  k: int) -> np.ndarray:
    """Predicted global class ids for samples V; scoring touches only the k
    active entries per sample (O(k c_t) per sample)."""
    if state.C is None:
        raise Unsolved()
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != W.dim:
        raise DimensionMismatch(W.dim, V.shape, "sample")
    if V.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    H = project_batch(W, V)
    acts = top_k_batch(H, k)
    scores = kernels.activation_scores(acts, state.C)
    cols = np.argmax(scores, axis=1)  # ties resolve to the lowest column
    ids = np.asarray(state.class_ids, dtype=np.int64)
    return ids[cols]


def predict(state: RidgeState, W: SparseProjectionMatrix, v: np.ndarray, k: int) -> int:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != W.dim:
        raise DimensionMismatch(W.dim, v.shape, "sample")
    return int(predict_batch(state, W, v[None, :], k)[0])


# ---- checkpointing (magic "FLYS") ----

_CKPT_HEAD = struct.Struct("<4sIQIIIIIII")


def save_checkpoint(state: RidgeState, path, seed: int, d: int, p: int, k: int) -> None:
    """Serialize accumulators and hyperparameters so a run can resume.

    Layout: header (magic, version, seed, m, d, p, k, c_t, tasks_seen,
    n_lambda), float64 lambda history, uint32 class ids, G, S, and a solved
    flag followed by C when present; all little endian.
    """
    m = state.expanded_dim
    c_t = state.classes_seen
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                                 seed & 0xFFFFFFFFFFFFFFFF, m, d, p, k, c_t,
                                 state.tasks_seen, len(state.lambda_history)))
        fh.write(np.asarray(state.lambda_history, dtype="<f8").tobytes())
        fh.write(np.asarray(state.class_ids, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(state.G, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.S, dtype="<f8").tobytes())
        fh.write(struct.pack("<B", 0 if state.C is None else 1))
        if state.C is not None:
            fh.write(np.ascontiguousarray(state.C, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (state, params) where params has seed/d/p/k from the header."""
    with open(path, "rb") as fh:
        buf = fh.read()

    def take(off, count):
        if off + count > len(buf):
            raise TruncatedFile(off, count, len(buf) - off)
        return buf[off:off + count]

    magic, version, seed, m, d, p, k, c_t, tasks_seen, n_lambda = \
        _CKPT_HEAD.unpack(take(0, _CKPT_HEAD.size))
    if magic != CHECKPOINT_MAGIC:
        raise BadMagic(magic)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(version, CHECKPOINT_VERSION)
    off = _CKPT_HEAD.size
    lambdas = np.frombuffer(take(off, n_lambda * 8), dtype="<f8").tolist()
    off += n_lambda * 8
    class_ids = np.frombuffer(take(off, c_t * 4), dtype="<u4").astype(int).tolist()
    off += c_t * 4
    G = np.frombuffer(take(off, m * m * 8), dtype="<f8").reshape(m, m).copy()
    off += m * m * 8
    S = np.frombuffer(take(off, m * c_t * 8), dtype="<f8").reshape(m, c_t).copy()
    off += m * c_t * 8
    (solved,) = struct.unpack("<B", take(off, 1))
    off += 1
    C = None
    if solved:
        C = np.frombuffer(take(off, m * c_t * 8), dtype="<f8").reshape(m, c_t).copy()
    state = RidgeState(expanded_dim=m, G=G, S=S, C=C, lambda_history=lambdas,
                       class_ids=class_ids, tasks_seen=tasks_seen)
    return state, {"seed": seed, "d": d, "p": p, "k": k}
