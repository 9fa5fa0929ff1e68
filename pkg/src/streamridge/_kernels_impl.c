/* Hot kernels for the sparse expansion stage and sparse similarity scoring.
 *
 * Layout rationale: the projection accumulates over a 64-sample tile so that
 * each expanded row's partial sums live in 8 AVX-512 registers.  Input
 * columns are processed in 48-column chunks so the gathered slice of the
 * transposed sample tile (48 x 64 doubles = 24 KB) stays in L1 across an
 * 8-row group.  Column indices stream as uint16, weights as float64 (the
 * broadcast then has no convert uop; the loop is frontend-bound).
 *
 * Threading: OpenMP over row groups / sample ranges, default team size 1
 * (srk_set_threads); every output element is written by exactly one thread,
 * so results are identical for any thread count.
 */

#include "_kernels_impl.h"

#include <string.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#ifdef __AVX512F__
#include <immintrin.h>
#endif

static int srk_threads = 1;

void srk_set_threads(int n) {
    srk_threads = n < 1 ? 1 : n;
}

int srk_get_threads(void) {
    return srk_threads;
}

int srk_simd_level(void) {
#ifdef __AVX512F__
    return 2;
#else
    return 0;
#endif
}

void srk_pack_tile(const double *V, int64_t d, int64_t s0, int64_t bs, double *vt) {
    if (bs < SRK_TILE)
        memset(vt, 0, (size_t)d * SRK_TILE * sizeof(double));
    for (int64_t s = 0; s < bs; s++) {
        const double *src = V + (s0 + s) * d;
        for (int64_t col = 0; col < d; col++)
            vt[col * SRK_TILE + s] = src[col];
    }
}

#ifdef __AVX512F__

/* One row's slice [j0, j1) of chunk-local entries, accumulated in 8 zmm. */
static inline void row_slice_avx512(const uint16_t *ri, const double *rw,
                                    int64_t j0, int64_t j1, int64_t base,
                                    const double *vtc, double *acc) {
    __m512d a0 = _mm512_load_pd(acc + 0), a1 = _mm512_load_pd(acc + 8);
    __m512d a2 = _mm512_load_pd(acc + 16), a3 = _mm512_load_pd(acc + 24);
    __m512d a4 = _mm512_load_pd(acc + 32), a5 = _mm512_load_pd(acc + 40);
    __m512d a6 = _mm512_load_pd(acc + 48), a7 = _mm512_load_pd(acc + 56);
    int64_t j = j0;
    for (; j + 2 <= j1; j += 2) {
        const double *u = vtc + (int64_t)(ri[j] - base) * SRK_TILE;
        const double *v = vtc + (int64_t)(ri[j + 1] - base) * SRK_TILE;
        __m512d wu = _mm512_set1_pd(rw[j]);
        __m512d wv = _mm512_set1_pd(rw[j + 1]);
        a0 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 0), a0);
        a1 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 8), a1);
        a2 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 16), a2);
        a3 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 24), a3);
        a4 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 32), a4);
        a5 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 40), a5);
        a6 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 48), a6);
        a7 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 56), a7);
        a0 = _mm512_fmadd_pd(wv, _mm512_load_pd(v + 0), a0);
        a1 = _mm512_fmadd_pd(wv, _mm512_load_pd(v + 8), a1);
        a2 = _mm512_fmadd_pd(wv, _mm512_load_pd(v + 16), a2);
        a3 = _mm512_fmadd_pd(wv, _mm512_load_pd(v + 24), a3);
        a4 = _mm512_fmadd_pd(wv, _mm512_load_pd(v + 32), a4);
        a5 = _mm512_fmadd_pd(wv, _mm512_load_pd(v + 40), a5);
        a6 = _mm512_fmadd_pd(wv, _mm512_load_pd(v + 48), a6);
        a7 = _mm512_fmadd_pd(wv, _mm512_load_pd(v + 56), a7);
    }
    for (; j < j1; j++) {
        const double *u = vtc + (int64_t)(ri[j] - base) * SRK_TILE;
        __m512d wu = _mm512_set1_pd(rw[j]);
        a0 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 0), a0);
        a1 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 8), a1);
        a2 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 16), a2);
        a3 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 24), a3);
        a4 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 32), a4);
        a5 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 40), a5);
        a6 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 48), a6);
        a7 = _mm512_fmadd_pd(wu, _mm512_load_pd(u + 56), a7);
    }
    _mm512_store_pd(acc + 0, a0);  _mm512_store_pd(acc + 8, a1);
    _mm512_store_pd(acc + 16, a2); _mm512_store_pd(acc + 24, a3);
    _mm512_store_pd(acc + 32, a4); _mm512_store_pd(acc + 40, a5);
    _mm512_store_pd(acc + 48, a6); _mm512_store_pd(acc + 56, a7);
}

#endif  /* __AVX512F__ */

static void project_group(const uint16_t *idx, const double *wgt, const int32_t *choff,
                          int64_t g, int64_t gn, int64_t p, int64_t nchunk,
                          const double *vt, int64_t bs,
                          double *H, int64_t ldh, int64_t s0) {
#ifdef __AVX512F__
    __attribute__((aligned(64))) double accbuf[8][SRK_TILE];
#else
    double accbuf[8][SRK_TILE];
#endif
    memset(accbuf, 0, sizeof(accbuf));
    for (int64_t c = 0; c < nchunk; c++) {
        const double *vtc = vt + c * SRK_CHUNK * SRK_TILE;
        int64_t base = c * SRK_CHUNK;
        for (int64_t r = 0; r < gn; r++) {
            int64_t i = g + r;
            int64_t j0 = choff[i * (nchunk + 1) + c];
            int64_t j1 = choff[i * (nchunk + 1) + c + 1];
            if (j0 == j1)
                continue;
            const uint16_t *ri = idx + i * p;
            const double *rw = wgt + i * p;
#ifdef __AVX512F__
            row_slice_avx512(ri, rw, j0, j1, base, vtc, accbuf[r]);
#else
            double *acc = accbuf[r];
            for (int64_t j = j0; j < j1; j++) {
                const double *v0 = vtc + (int64_t)(ri[j] - base) * SRK_TILE;
                double w = rw[j];
                for (int64_t s = 0; s < SRK_TILE; s++)
                    acc[s] += w * v0[s];
            }
#endif
        }
    }
    /* Transposed store: per sample a contiguous run of gn doubles.  For full
     * groups at 64-byte-aligned targets use non-temporal full-line stores;
     * H is written once per tile and read back much later, and regular
     * strided stores would pay read-for-ownership on every line. */
#ifdef __AVX512F__
    if (gn == 8 && bs == SRK_TILE && ((uintptr_t)(H + s0 * ldh + g) % 64 == 0)
        && (ldh % 8 == 0)) {
        for (int64_t s = 0; s < bs; s++) {
            __m512d line = _mm512_set_pd(accbuf[7][s], accbuf[6][s], accbuf[5][s],
                                         accbuf[4][s], accbuf[3][s], accbuf[2][s],
                                         accbuf[1][s], accbuf[0][s]);
            _mm512_stream_pd(H + (s0 + s) * ldh + g, line);
        }
        return;
    }
#endif
    for (int64_t s = 0; s < bs; s++) {
        double *hrow = H + (s0 + s) * ldh + g;
        for (int64_t r = 0; r < gn; r++)
            hrow[r] = accbuf[r][s];
    }
}

void srk_project_tile(const uint16_t *idx, const double *wgt, const int32_t *choff,
                      int64_t m, int64_t p, int64_t nchunk,
                      const double *vt, int64_t bs,
                      double *H, int64_t ldh, int64_t s0) {
    int64_t ngroups = (m + 7) / 8;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(srk_threads)
#endif
    for (int64_t gi = 0; gi < ngroups; gi++) {
        int64_t g = gi * 8;
        int64_t gn = (m - g) < 8 ? (m - g) : 8;
        project_group(idx, wgt, choff, g, gn, p, nchunk, vt, bs, H, ldh, s0);
    }
#ifdef __AVX512F__
    _mm_sfence();  /* publish the non-temporal stores */
#endif
}

#ifdef __AVX512F__

/* Score rows with up to 24 columns: 3 register accumulators, masked tail. */
static void scores_small_avx512(const int64_t *indptr, const uint16_t *indices,
                                const double *values, const double *C, int64_t c,
                                double *out, int64_t s_lo, int64_t s_hi) {
    const int64_t nv = (c + 7) / 8;
    __mmask8 tail = (__mmask8)((1u << (c & 7)) - 1);
    if ((c & 7) == 0)
        tail = 0xFF;
    const __mmask8 m0 = nv > 1 ? 0xFF : tail;
    const __mmask8 m1 = nv > 2 ? 0xFF : tail;
    for (int64_t s = s_lo; s < s_hi; s++) {
        __m512d a0 = _mm512_setzero_pd(), a1 = a0, a2 = a0;
        const int64_t p0 = indptr[s], p1 = indptr[s + 1];
        for (int64_t ptr = p0; ptr < p1; ptr++) {
            if (ptr + 24 < p1)
                _mm_prefetch((const char *)(C + (int64_t)indices[ptr + 24] * c),
                             _MM_HINT_T0);
            const double *crow = C + (int64_t)indices[ptr] * c;
            __m512d v = _mm512_set1_pd(values[ptr]);
            a0 = _mm512_fmadd_pd(v, _mm512_maskz_loadu_pd(m0, crow), a0);
            if (nv > 1)
                a1 = _mm512_fmadd_pd(v, _mm512_maskz_loadu_pd(m1, crow + 8), a1);
            if (nv > 2)
                a2 = _mm512_fmadd_pd(v, _mm512_maskz_loadu_pd(tail, crow + 16), a2);
        }
        double *os = out + s * c;
        _mm512_mask_storeu_pd(os, m0, a0);
        if (nv > 1)
            _mm512_mask_storeu_pd(os + 8, m1, a1);
        if (nv > 2)
            _mm512_mask_storeu_pd(os + 16, tail, a2);
    }
}

/* Score rows with up to 64 columns: 8 register accumulators. */
static void scores_mid_avx512(const int64_t *indptr, const uint16_t *indices,
                              const double *values, const double *C, int64_t c,
                              double *out, int64_t s_lo, int64_t s_hi) {
    const int64_t nv = (c + 7) / 8;
    __mmask8 tail = (__mmask8)((1u << (c & 7)) - 1);
    if ((c & 7) == 0)
        tail = 0xFF;
    for (int64_t s = s_lo; s < s_hi; s++) {
        __m512d acc[8];
        for (int64_t q = 0; q < nv; q++)
            acc[q] = _mm512_setzero_pd();
        const int64_t p0 = indptr[s], p1 = indptr[s + 1];
        for (int64_t ptr = p0; ptr < p1; ptr++) {
            if (ptr + 16 < p1) {
                const char *pf = (const char *)(C + (int64_t)indices[ptr + 16] * c);
                _mm_prefetch(pf, _MM_HINT_T0);
                _mm_prefetch(pf + 192, _MM_HINT_T0);
                _mm_prefetch(pf + 448, _MM_HINT_T0);
            }
            const double *crow = C + (int64_t)indices[ptr] * c;
            __m512d v = _mm512_set1_pd(values[ptr]);
            for (int64_t q = 0; q < nv - 1; q++)
                acc[q] = _mm512_fmadd_pd(v, _mm512_loadu_pd(crow + q * 8), acc[q]);
            acc[nv - 1] = _mm512_fmadd_pd(
                v, _mm512_maskz_loadu_pd(tail, crow + (nv - 1) * 8), acc[nv - 1]);
        }
        double *os = out + s * c;
        for (int64_t q = 0; q < nv - 1; q++)
            _mm512_storeu_pd(os + q * 8, acc[q]);
        _mm512_mask_storeu_pd(os + (nv - 1) * 8, tail, acc[nv - 1]);
    }
}

#endif  /* __AVX512F__ */

static void scores_range(const int64_t *indptr, const uint16_t *indices,
                         const double *values, const double *C, int64_t c,
                         double *out, int64_t s_lo, int64_t s_hi) {
#ifdef __AVX512F__
    if (c <= 24) {
        scores_small_avx512(indptr, indices, values, C, c, out, s_lo, s_hi);
        return;
    }
    if (c <= 64) {
        scores_mid_avx512(indptr, indices, values, C, c, out, s_lo, s_hi);
        return;
    }
#endif
    for (int64_t s = s_lo; s < s_hi; s++) {
        double *restrict os = out + s * c;
        for (int64_t q = 0; q < c; q++)
            os[q] = 0.0;
        for (int64_t ptr = indptr[s]; ptr < indptr[s + 1]; ptr++) {
            const double v = values[ptr];
            const double *restrict crow = C + (int64_t)indices[ptr] * c;
            for (int64_t q = 0; q < c; q++)
                os[q] += v * crow[q];
        }
    }
}

void srk_scores(const int64_t *indptr, const uint16_t *indices, const double *values,
                int64_t n, const double *C, int64_t c, double *out) {
#ifdef _OPENMP
    if (srk_threads > 1) {
        int nthreads = srk_threads;
        int64_t chunk = (n + nthreads - 1) / nthreads;
#pragma omp parallel for schedule(static) num_threads(nthreads)
        for (int t = 0; t < nthreads; t++) {
            int64_t lo = (int64_t)t * chunk;
            int64_t hi = lo + chunk < n ? lo + chunk : n;
            if (lo < hi)
                scores_range(indptr, indices, values, C, c, out, lo, hi);
        }
        return;
    }
#endif
    scores_range(indptr, indices, values, C, c, out, 0, n);
}
