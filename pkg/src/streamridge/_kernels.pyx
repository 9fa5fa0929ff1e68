# cython: language_level=3, boundscheck=False, wraparound=False
"""Cython bridge to the compiled projection and scoring kernels."""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t, uint16_t

cnp.import_array()

cdef extern from "_kernels_impl.h":
    int SRK_TILE
    int srk_simd_level() nogil
    void srk_set_threads(int n) nogil
    int srk_get_threads() nogil
    void srk_pack_tile(const double *V, int64_t d, int64_t s0, int64_t bs, double *vt) nogil
    void srk_project_tile(const uint16_t *idx, const double *wgt, const int32_t *choff,
                          int64_t m, int64_t p, int64_t nchunk,
                          const double *vt, int64_t bs,
                          double *H, int64_t ldh, int64_t s0) nogil
    void srk_scores(const int64_t *indptr, const uint16_t *indices, const double *values,
                    int64_t n, const double *C, int64_t c, double *out) nogil


def simd_level():
    return srk_simd_level()


def set_threads(n):
    srk_set_threads(int(n))


def get_threads():
    return srk_get_threads()


def project_batch(const uint16_t[:, ::1] idx, const double[:, ::1] wgt,
                  const int32_t[:, ::1] choff, const double[:, ::1] V):
    """Project V (n x d) through the packed sparse matrix; returns H (n x m)."""
    cdef int64_t m = idx.shape[0], p = idx.shape[1]
    cdef int64_t n = V.shape[0], d = V.shape[1]
    cdef int64_t nchunk = choff.shape[1] - 1
    cdef cnp.ndarray[double, ndim=2] H = np.empty((n, m), dtype=np.float64)
    if n == 0:
        return H
    cdef cnp.ndarray[double, ndim=1] vt = np.empty(d * SRK_TILE, dtype=np.float64)
    cdef double *Hp = <double *> H.data
    cdef double *vtp = <double *> vt.data
    cdef int64_t s0, bs
    with nogil:
        s0 = 0
        while s0 < n:
            bs = n - s0
            if bs > SRK_TILE:
                bs = SRK_TILE
            srk_pack_tile(&V[0, 0], d, s0, bs, vtp)
            srk_project_tile(&idx[0, 0], &wgt[0, 0], &choff[0, 0],
                             m, p, nchunk, vtp, bs, Hp, m, s0)
            s0 += bs
    return H


def sparse_scores(const int64_t[::1] indptr, const uint16_t[::1] indices,
                  const double[::1] values, const double[:, ::1] C):
    """Scores (n x c) of CSR activations against prototype columns C (m x c)."""
    cdef int64_t n = indptr.shape[0] - 1
    cdef int64_t c = C.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, c), dtype=np.float64)
    if n == 0 or c == 0:
        out[:] = 0.0
        return out
    cdef double *outp = <double *> out.data
    cdef const double *Cp = &C[0, 0]
    cdef const int64_t *ip = &indptr[0]
    cdef const uint16_t *xp
    cdef const double *vp
    if indices.shape[0] == 0:
        out[:] = 0.0
        return out
    xp = &indices[0]
    vp = &values[0]
    with nogil:
        srk_scores(ip, xp, vp, n, Cp, c, outp)
    return out
