"""Kernel backend selection: compiled extension with a NumPy/SciPy fallback.

The compiled backend is used when the extension built at install time and the
operand shapes fit its packed layouts (uint16 column indices).  Set
``STREAMRIDGE_BACKEND=numpy`` or ``=compiled`` to force a backend; forcing
``compiled`` raises if the extension is unavailable.
"""

import os

import numpy as np

try:
    from . import _kernels
except ImportError:
    _kernels = None

_FORCED = os.environ.get("STREAMRIDGE_BACKEND", "auto").lower()
if _FORCED not in ("auto", "compiled", "numpy"):
    raise ValueError(f"STREAMRIDGE_BACKEND must be auto|compiled|numpy, got {_FORCED}")
if _FORCED == "compiled" and _kernels is None:
    raise ImportError("STREAMRIDGE_BACKEND=compiled but the extension is not built")

# Kernel thread-team size.  Defaults to 1: the kernels are cache-blocked for
# a private L1/L2 and SMT or throttled vCPUs actively hurt them, unlike BLAS.
if _kernels is not None:
    _kernels.set_threads(int(os.environ.get("STREAMRIDGE_THREADS", "1")))

U16_MAX = 65535


def compiled_available() -> bool:
    return _kernels is not None


def using_compiled() -> bool:
    return _kernels is not None and _FORCED != "numpy"


def backend_name() -> str:
    if not using_compiled():
        return "numpy"
    return "compiled-avx512" if _kernels.simd_level() >= 2 else "compiled-portable"


def project_batch(W, V: np.ndarray) -> np.ndarray:
    """H (n x m) from samples V (n x d) through projection matrix W."""
    V = np.ascontiguousarray(V, dtype=np.float64)
    if using_compiled() and W.dim <= U16_MAX:
        return _kernels.project_batch(W.packed_indices(), W.weights,
                                      W.chunk_offsets(), V)
    return _project_batch_np(W, V)


def _project_batch_np(W, V: np.ndarray) -> np.ndarray:
    if V.shape[0] == 0:
        return np.empty((0, W.expanded_dim), dtype=np.float64)
    return np.ascontiguousarray((W.to_csr() @ V.T).T)


def activation_scores(batch, C: np.ndarray) -> np.ndarray:
    """Scores (n x c) of sparse activations against prototype columns C.

    Touches only the stored (index, value) pairs: k multiply-adds per sample
    per class column.
    """
    C = np.ascontiguousarray(C, dtype=np.float64)
    if using_compiled() and batch.dim <= U16_MAX:
        return _kernels.sparse_scores(batch.indptr, batch.packed_indices(),
                                      batch.values, C)
    return _activation_scores_np(batch, C)


def _activation_scores_np(batch, C: np.ndarray) -> np.ndarray:
    if batch.n == 0:
        return np.zeros((0, C.shape[1]), dtype=np.float64)
    return np.asarray(batch.to_csr() @ C)
