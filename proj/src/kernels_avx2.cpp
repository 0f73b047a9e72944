#include "prodexp/kernels.hpp"

#include <immintrin.h>

namespace prodexp::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    __m256d s2 = _mm256_setzero_pd();
    __m256d s3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
        s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
        s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
    }
    for (; i + 4 <= n; i += 4)
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// Four output columns at a time so each pass over column i feeds four sums.
void gram(const double* a, std::size_t n, std::size_t p, double* out) {
    for (std::size_t i = 0; i < p; ++i) {
        const double* ai = a + i * n;
        std::size_t j = i;
        for (; j + 4 <= p; j += 4) {
            const double* b0 = a + j * n;
            const double* b1 = b0 + n;
            const double* b2 = b1 + n;
            const double* b3 = b2 + n;
            __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
            std::size_t r = 0;
            for (; r + 4 <= n; r += 4) {
                __m256d x = _mm256_loadu_pd(ai + r);
                s0 = _mm256_fmadd_pd(x, _mm256_loadu_pd(b0 + r), s0);
                s1 = _mm256_fmadd_pd(x, _mm256_loadu_pd(b1 + r), s1);
                s2 = _mm256_fmadd_pd(x, _mm256_loadu_pd(b2 + r), s2);
                s3 = _mm256_fmadd_pd(x, _mm256_loadu_pd(b3 + r), s3);
            }
            double t[4] = {hsum(s0), hsum(s1), hsum(s2), hsum(s3)};
            for (; r < n; ++r) {
                t[0] += ai[r] * b0[r];
                t[1] += ai[r] * b1[r];
                t[2] += ai[r] * b2[r];
                t[3] += ai[r] * b3[r];
            }
            for (std::size_t c = 0; c < 4; ++c) {
                out[i + (j + c) * p] = t[c];
                out[(j + c) + i * p] = t[c];
            }
        }
        for (; j < p; ++j) {
            double s = dot(ai, a + j * n, n);
            out[i + j * p] = s;
            out[j + i * p] = s;
        }
    }
}

void gemv_t(const double* a, std::size_t n, std::size_t p, const double* v, double* out) {
    for (std::size_t j = 0; j < p; ++j) out[j] = dot(a + j * n, v, n);
}

}  // namespace prodexp::kernels::avx2
