#pragma once

// Point estimators of the between-study variance tau^2.

#include <span>
#include <string_view>
#include <optional>

#include "qsw/meta_core.hpp"

namespace qsw {

enum class TauMethod { SDL, DL, MP, REML };

inline constexpr std::array<TauMethod, 4> kAllTauMethods = {TauMethod::SDL, TauMethod::DL, TauMethod::MP,
                                                            TauMethod::REML};

std::string_view to_string(TauMethod m) noexcept;
std::optional<TauMethod> parse_tau_method(std::string_view name) noexcept;

struct TauEstimate {
    double value = 0.0;        // >= 0
    double untruncated = 0.0;  // before the zero floor; the profile root for MP/REML may be negative
    TauMethod method = TauMethod::SDL;
    bool truncated = false;
    int iterations = 0;
    friend bool operator==(const TauEstimate&, const TauEstimate&) = default;
};

struct TauOptions {
    double tol = 1e-10;
    int max_iter = 500;
};

/// Moment estimator from E(Q) under constant weights.
TauEstimate sdl(std::span<const StudySummary> studies, const WeightScheme& scheme);

/// DerSimonian-Laird.
TauEstimate dl(std::span<const StudySummary> studies);

/// Mandel-Paule: root of Q(tau2) = K - 1 with weights 1/(v_i^2 + tau2).
TauEstimate mandel_paule(std::span<const StudySummary> studies, const TauOptions& opts = {});

/// Restricted maximum likelihood by Fisher scoring with a zero floor.
TauEstimate reml(std::span<const StudySummary> studies, const TauOptions& opts = {});

/// Restricted log-likelihood of the normal random-effects model (up to a constant).
double reml_log_likelihood(std::span<const StudySummary> studies, double tau2);

/// Q with weights 1/(v_i^2 + tau2).
double generalized_q(std::span<const StudySummary> studies, double tau2);

TauEstimate estimate_tau2(TauMethod method, std::span<const StudySummary> studies, const WeightScheme& constant);

}  // namespace qsw
