#pragma once

// Exact first three moments of Q under the random-effects model, and the
// unconditional central moments of the study estimates that feed them.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "qsw/meta_core.hpp"

namespace qsw {

/// Per-study unconditional central moments M_2..M_6 of the effect estimates.
struct UnconditionalMoments {
    std::vector<double> m2, m3, m4, m5, m6;

    std::size_t size() const noexcept { return m2.size(); }
};

struct QMoments {
    double mean = 0.0;
    double raw2 = 0.0;
    double raw3 = 0.0;
    double variance = 0.0;
    double central3 = 0.0;

    static QMoments from_raw(double mean, double raw2, double raw3);
};

/// Mean difference: the estimate is conditionally N(theta_i, v_i^2), so odd
/// moments vanish and the even ones are polynomials in v_i^2 and tau2.
UnconditionalMoments md_unconditional_moments(const ModelState& state);

/// Expectations E[M^c_j (theta_i - theta)^(r-j)] of one study, keyed by
/// (r, j) with 2 <= j <= r <= 6. The j = 0 entries follow from
/// theta_i ~ N(theta, tau2) and the j = 1 entries are zero, so neither is stored.
class ConditionalMomentTable {
  public:
    void set(int r, int j, double value);
    std::optional<double> get(int r, int j) const;

  private:
    std::array<std::optional<double>, 49> entries_{};
};

/// Assembles M_{ri} = sum_j C(r, j) E[M^c_j (theta_i - theta)^(r - j)].
/// Throws DomainError naming the first missing (r, j) entry.
UnconditionalMoments general_unconditional_moments(std::span<const ConditionalMomentTable> studies,
                                                   double tau2);

/// E(Q) = W sum q_i (1 - q_i) M_2i
double q_mean(const UnconditionalMoments& m, const WeightScheme& scheme);

/// Var(Q); the i != j sum is reduced to power sums, O(K).
double q_variance(const UnconditionalMoments& m, const WeightScheme& scheme);

/// E(Q^3), all eight summation groups, O(K).
double q_third_raw_moment(const UnconditionalMoments& m, const WeightScheme& scheme);

QMoments q_moments(const UnconditionalMoments& m, const WeightScheme& scheme);

}  // namespace qsw
