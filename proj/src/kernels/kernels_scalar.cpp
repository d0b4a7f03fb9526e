#include "qsw/kernels.hpp"

namespace qsw::kernels {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double weighted_sq_dev(const double* w, const double* x, double center, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - center;
        s += w[i] * d * d;
    }
    return s;
}

double advance_powers(double* pow, const double* base, const double* coef, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        pow[i] *= base[i];
        s += coef[i] * pow[i];
    }
    return s;
}

double sum_squares(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
    return s;
}

constexpr Table kScalar{Isa::Scalar, "scalar", dot, weighted_sq_dev, advance_powers, sum_squares};

}  // namespace

const Table& scalar_table() noexcept { return kScalar; }

}  // namespace qsw::kernels
