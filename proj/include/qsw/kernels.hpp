#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation; vector variants are selected once at runtime from the
// host CPU and must agree with the reference up to reassociation error.
//
// Set QSW_KERNELS=scalar (or avx2 / neon) to force a variant.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace qsw::kernels {

enum class Isa { Scalar, Avx2, Neon };

struct Table {
    Isa isa;
    const char* name;
    // sum_i a_i b_i
    double (*dot)(const double* a, const double* b, std::size_t n);
    // sum_i w_i (x_i - center)^2
    double (*weighted_sq_dev)(const double* w, const double* x, double center, std::size_t n);
    // pow_i *= base_i, then return sum_i coef_i pow_i
    double (*advance_powers)(double* pow, const double* base, const double* coef, std::size_t n);
    // sum_i x_i^2
    double (*sum_squares)(const double* x, std::size_t n);
};

const Table& scalar_table() noexcept;
#if defined(QSW_HAVE_AVX2_KERNELS)
const Table& avx2_table() noexcept;
#endif
#if defined(QSW_HAVE_NEON_KERNELS)
const Table& neon_table() noexcept;
#endif

/// Variants compiled in and supported by this CPU, scalar first.
std::vector<const Table*> available();

/// The variant used by the library; fixed on first call.
const Table& active();

std::string_view isa_name(Isa isa) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

inline double weighted_sq_dev(std::span<const double> w, std::span<const double> x, double center) {
    return active().weighted_sq_dev(w.data(), x.data(), center, w.size() < x.size() ? w.size() : x.size());
}

inline double sum_squares(std::span<const double> x) {
    return active().sum_squares(x.data(), x.size());
}

}  // namespace qsw::kernels
