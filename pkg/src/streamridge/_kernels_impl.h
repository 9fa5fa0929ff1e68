#ifndef STREAMRIDGE_KERNELS_IMPL_H
#define STREAMRIDGE_KERNELS_IMPL_H

#include <stdint.h>

/* Sample-tile width (doubles held per expanded row while accumulating) and
 * input-column chunk size (columns of the transposed sample tile kept hot in
 * L1 while a group of rows is processed). */
#define SRK_TILE 64
#define SRK_CHUNK 48

/* 2 = AVX-512 intrinsics, 0 = portable C. */
int srk_simd_level(void);

/* OpenMP team size used by the kernels (default 1). */
void srk_set_threads(int n);
int srk_get_threads(void);

/* Transpose samples [s0, s0+bs) of V (n x d, row major) into vt (d x SRK_TILE,
 * row major); lanes >= bs are zeroed. */
void srk_pack_tile(const double *V, int64_t d, int64_t s0, int64_t bs, double *vt);

/* H[s0+s, i] = sum_j wgt[i, j] * vt[idx[i, j], s]  for s < bs, all i < m.
 * idx rows are column indices sorted ascending; choff (m x (nchunk+1)) gives
 * the slice of each row's entries falling into each SRK_CHUNK column chunk.
 * Parallelised over row groups with OpenMP; every output element is written
 * by exactly one thread, so results do not depend on the thread count. */
void srk_project_tile(const uint16_t *idx, const double *wgt, const int32_t *choff,
                      int64_t m, int64_t p, int64_t nchunk,
                      const double *vt, int64_t bs,
                      double *H, int64_t ldh, int64_t s0);

/* out[s, :] = sum over the CSR row s of values[ptr] * C[indices[ptr], :].
 * C is (mdim x c) row major; indices are uint16 so mdim must be <= 65535. */
void srk_scores(const int64_t *indptr, const uint16_t *indices, const double *values,
                int64_t n, const double *C, int64_t c, double *out);

#endif
