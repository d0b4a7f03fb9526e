#pragma once

// Domain types of the random-effects model and the generalized Q statistic.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qsw/numerics.hpp"

namespace qsw {

/// One two-arm study: arm sizes, arm variances (true or estimated) and the
/// mean-difference estimate.
struct StudySummary {
    int n_treat = 0;
    int n_ctrl = 0;
    double var_treat = 0.0;
    double var_ctrl = 0.0;
    double effect = 0.0;

    /// Conditional variance of the mean difference, var_T/n_T + var_C/n_C.
    double cond_var() const noexcept {
        return var_treat / n_treat + var_ctrl / n_ctrl;
    }

    /// Throws DomainError when arm sizes are below 2, variances are not
    /// positive, or the effect is not finite.
    void validate() const;

    friend bool operator==(const StudySummary&, const StudySummary&) = default;
};

enum class WeightKind { EffectiveSampleSize, InverseVariance, Custom };

std::string to_string(WeightKind kind);

/// Positive per-study weights w_i with W = sum w_i and q_i = w_i / W.
class WeightScheme {
  public:
    WeightScheme(std::vector<double> weights, WeightKind kind, double tau2 = 0.0);

    std::span<const double> weights() const noexcept { return weights_; }
    std::span<const double> normalized() const noexcept { return normalized_; }
    double total() const noexcept { return total_; }
    std::size_t size() const noexcept { return weights_.size(); }
    WeightKind kind() const noexcept { return kind_; }
    /// Only meaningful for InverseVariance.
    double tau2() const noexcept { return tau2_; }

  private:
    std::vector<double> weights_;
    std::vector<double> normalized_;
    double total_ = 0.0;
    WeightKind kind_;
    double tau2_ = 0.0;
};

/// Between-study variance, conditional variances v_i^2 and overall mean.
class ModelState {
  public:
    ModelState(double tau2, std::vector<double> cond_vars, double mu = 0.0);

    double tau2() const noexcept { return tau2_; }
    double mu() const noexcept { return mu_; }
    std::span<const double> cond_vars() const noexcept { return cond_vars_; }
    std::size_t K() const noexcept { return cond_vars_.size(); }

  private:
    double tau2_;
    std::vector<double> cond_vars_;
    double mu_;
};

/// Treatment/control sizes for a study of `n_total` subjects with a fraction
/// `control_fraction` in the control arm: n_T = ceil((1 - f) n), n_C = n - n_T.
std::pair<int, int> arm_split(int n_total, double control_fraction);

WeightScheme effective_sample_size_weights(std::span<const StudySummary> studies);

/// w_i = 1 / (var_i + tau2) with var_i the study's conditional variance.
WeightScheme inverse_variance_weights(std::span<const StudySummary> studies, double tau2);

WeightScheme custom_weights(std::vector<double> weights);

/// sum w_i (theta_i - theta_w)^2 with theta_w the weighted mean.
double q_statistic(std::span<const double> effects, const WeightScheme& scheme);

/// A = W (diag(q) - q q^T), so that Q = Theta^T A Theta.
SymmetricMatrix q_form_matrix(const WeightScheme& scheme);

std::vector<double> effects_of(std::span<const StudySummary> studies);
std::vector<double> cond_vars_of(std::span<const StudySummary> studies);

// Study CSV: header `n_treat,n_ctrl,var_treat,var_ctrl,effect`.
std::vector<StudySummary> read_studies_csv(std::istream& in);
std::vector<StudySummary> read_studies_csv(const std::string& path);
void write_studies_csv(std::ostream& out, std::span<const StudySummary> studies);

}  // namespace qsw
