#pragma once

// Evaluatable laws for Q: the exact weighted chi-square law (constant
// weights, mean difference), two- and three-moment chi-square fits, and the
// inverse-variance comparators (chi-square, Welch, Biggerstaff-Jackson).

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "qsw/meta_core.hpp"
#include "qsw/qmoments.hpp"

namespace qsw {

enum class Method { FarebrotherSW, M2SW, M3SW, ChiSquareIV, WelchIV, BJIV };

inline constexpr std::array<Method, 6> kAllMethods = {Method::FarebrotherSW, Method::M2SW, Method::M3SW,
                                                      Method::ChiSquareIV,   Method::WelchIV, Method::BJIV};

std::string_view to_string(Method m) noexcept;
std::optional<Method> parse_method(std::string_view name) noexcept;

/// sum_r lambda_r chi2_{h_r}, lambda_r > 0 distinct.
struct WeightedChi2 {
    std::vector<double> lambda;
    std::vector<int> multiplicity;
};

/// c chi2_p
struct ScaledChi2 {
    double c = 1.0;
    double p = 1.0;
};

/// c (chi2_p)^r
struct PowerChi2 {
    double c = 1.0;
    double p = 1.0;
    double r = 1.0;
};

struct Chi2 {
    double df = 1.0;
};

/// scale * F(df1, df2)
struct ScaledF {
    double scale = 1.0;
    double df1 = 1.0;
    double df2 = 1.0;
};

class QDistribution {
  public:
    using Params = std::variant<WeightedChi2, ScaledChi2, PowerChi2, Chi2, ScaledF>;

    QDistribution(Method kind, Params params) : kind_(kind), params_(std::move(params)) {}

    Method kind() const noexcept { return kind_; }
    const Params& params() const noexcept { return params_; }

    /// P(Q > x)
    double upper_tail(double x) const;
    std::vector<double> upper_tail(std::span<const double> xs) const;

  private:
    Method kind_;
    Params params_;
};

inline double upper_tail(const QDistribution& dist, double x) { return dist.upper_tail(x); }

struct SeriesOptions {
    /// Analytic bound on the discarded tail of the series.
    double tol = 1e-10;
    int max_terms = 200000;
    /// Eigenvalues within this relative distance are merged.
    double merge_rel = 1e-8;
};

/// P(sum_r lambda_r chi2_{h_r} <= x) by Ruben's mixture-of-chi-square series
/// with beta = min lambda. Terms are added until
/// P(chi2_{m+2N} <= x / beta) * (1 - sum_{k<N} a_k) <= tol.
double weighted_chi2_cdf(const WeightedChi2& law, double x, const SeriesOptions& opts = {});

/// Eigen-decomposition of Sigma^{1/2} A Sigma^{1/2} for Sigma = diag(variances),
/// with the structural zero removed and clustered eigenvalues merged.
WeightedChi2 quadratic_form_law(std::span<const double> variances, const WeightScheme& scheme,
                                const SeriesOptions& opts = {});

/// Exact law of Q for mean differences with constant weights:
/// Sigma = diag(v_i^2 + tau2).
QDistribution exact_weighted_chi2(const ModelState& state, const WeightScheme& scheme);

/// c chi2_p matched to E(Q), E(Q^2). Throws DomainError on degenerate moments.
QDistribution m2_approx(const QMoments& qm);

/// c (chi2_p)^r matched to the first three raw moments. Throws M3Breakdown
/// when the moment equations have no admissible solution from the M2 start.
QDistribution m3_approx(const QMoments& qm);

QDistribution chi2_iv(std::size_t K);

/// Welch-Satterthwaite per-study degrees of freedom of the variance estimate.
double satterthwaite_df(const StudySummary& s);

/// Welch's heteroscedastic-ANOVA law for Q with estimated IV weights.
QDistribution welch_iv(std::span<const StudySummary> studies);

/// Quadratic-form law treating the estimated IV weights as constants, with
/// Sigma = diag(v_i^2 + tau2).
QDistribution bj_iv(std::span<const StudySummary> studies, double tau2);

/// The law method `m` assigns to its statistic: `constant` weights for the
/// Farebrother/M2/M3 family, weights 1 / v_i^2 for the others. `tau2` is the
/// between-study variance used for the law's parameters.
QDistribution method_law(Method m, std::span<const StudySummary> studies, const WeightScheme& constant,
                         double tau2);

/// The statistic method `m` is applied to.
double method_statistic(Method m, std::span<const StudySummary> studies, const WeightScheme& constant);

/// P(Q > observed) for method `m`. Throws M3Breakdown.
double method_upper_tail(Method m, std::span<const StudySummary> studies, const WeightScheme& constant,
                         double tau2);

}  // namespace qsw
