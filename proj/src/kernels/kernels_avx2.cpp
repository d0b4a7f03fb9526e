// Compiled with -mavx2 -mfma; only reached after a cpuid check.
#include "qsw/kernels.hpp"

#include <immintrin.h>

namespace qsw::kernels {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double weighted_sq_dev(const double* w, const double* x, double center, std::size_t n) {
    const __m256d c = _mm256_set1_pd(center);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), c);
        acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), d), d, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = x[i] - center;
        s += w[i] * d * d;
    }
    return s;
}

double advance_powers(double* pow, const double* base, const double* coef, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d p = _mm256_mul_pd(_mm256_loadu_pd(pow + i), _mm256_loadu_pd(base + i));
        _mm256_storeu_pd(pow + i, p);
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(coef + i), p, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        pow[i] *= base[i];
        s += coef[i] * pow[i];
    }
    return s;
}

double sum_squares(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256d u = _mm256_loadu_pd(x + i);
        const __m256d v = _mm256_loadu_pd(x + i + 4);
        acc0 = _mm256_fmadd_pd(u, u, acc0);
        acc1 = _mm256_fmadd_pd(v, v, acc1);
    }
    for (; i + 4 <= n; i += 4) {
        const __m256d u = _mm256_loadu_pd(x + i);
        acc0 = _mm256_fmadd_pd(u, u, acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

constexpr Table kAvx2{Isa::Avx2, "avx2", dot, weighted_sq_dev, advance_powers, sum_squares};

}  // namespace

const Table& avx2_table() noexcept { return kAvx2; }

}  // namespace qsw::kernels
