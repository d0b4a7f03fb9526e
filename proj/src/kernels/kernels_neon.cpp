#include "qsw/kernels.hpp"

#include <arm_neon.h>

namespace qsw::kernels {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    double s = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double weighted_sq_dev(const double* w, const double* x, double center, std::size_t n) {
    const float64x2_t c = vdupq_n_f64(center);
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t d = vsubq_f64(vld1q_f64(x + i), c);
        acc = vfmaq_f64(acc, vmulq_f64(vld1q_f64(w + i), d), d);
    }
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) {
        const double d = x[i] - center;
        s += w[i] * d * d;
    }
    return s;
}

double advance_powers(double* pow, const double* base, const double* coef, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t p = vmulq_f64(vld1q_f64(pow + i), vld1q_f64(base + i));
        vst1q_f64(pow + i, p);
        acc = vfmaq_f64(acc, vld1q_f64(coef + i), p);
    }
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) {
        pow[i] *= base[i];
        s += coef[i] * pow[i];
    }
    return s;
}

double sum_squares(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t u = vld1q_f64(x + i);
        acc = vfmaq_f64(acc, u, u);
    }
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

constexpr Table kNeon{Isa::Neon, "neon", dot, weighted_sq_dev, advance_powers, sum_squares};

}  // namespace

const Table& neon_table() noexcept { return kNeon; }

}  // namespace qsw::kernels
