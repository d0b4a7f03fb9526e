#pragma once

// Monte Carlo engine for the mean-difference simulation design: scenario
// grid, study generation, per-replication p-values and their aggregation.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qsw/meta_core.hpp"
#include "qsw/qdist.hpp"
#include "qsw/rng.hpp"
#include "qsw/tau_estimators.hpp"

namespace qsw {

inline constexpr std::array<double, 17> kPGrid = {.001, .0025, .005, .01, .025, .05, .1,   .25,  .5,
                                                  .75,  .9,    .95,  .975, .99, .995, .9975, .999};
inline constexpr std::array<double, 4> kAlphaGrid = {.001, .005, .01, .05};

enum class SizePattern { Equal, Unequal };

std::string to_string(SizePattern p);

/// Base five-study sizes for an unequal pattern with average size `nbar`
/// (13, 15, 30, 60, 100 or 160). Throws DomainError otherwise.
std::array<int, 5> unequal_base(int nbar);

struct Scenario {
    int K = 5;
    SizePattern pattern = SizePattern::Equal;
    int n_label = 20;  // n for equal sizes, n-bar for unequal
    std::vector<int> sizes;
    double f = 0.5;
    double sigma2_T = 1.0;
    double sigma2_C = 1.0;
    double tau2 = 0.0;
    double mu = 0.0;
    int reps = 10000;

    /// Canonical description; also the RNG key material.
    std::string id() const;
    /// Throws DomainError on an arm smaller than 2 or inconsistent sizes.
    void validate() const;
};

Scenario make_scenario(int K, SizePattern pattern, int n_label, double f, double sigma2_T, double tau2,
                       int reps = 10000);

enum class VarianceMode {
    Estimated,  // arm variances are chi-square draws
    Known       // summaries carry the true arm variances
};

/// One study for replication-local stream `rng`. Draw order per study:
/// treatment variance, control variance, effect.
StudySummary generate_study(rng::Stream& rng, const Scenario& sc, std::size_t i,
                            VarianceMode mode = VarianceMode::Estimated);

std::vector<StudySummary> generate_studies(rng::Stream& rng, const Scenario& sc,
                                           VarianceMode mode = VarianceMode::Estimated);

struct GridSpec {
    SizePattern pattern = SizePattern::Equal;
    std::vector<int> K = {5, 10, 30};
    /// Empty means the default sizes for the pattern (and, for unequal, per f).
    std::vector<int> n;
    std::vector<double> f = {0.5, 0.75};
    std::vector<double> sigma2_T = {1.0, 2.0};
    std::vector<double> tau2 = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    int reps = 10000;
};

/// Cross-product in the order K, n, f, sigma2_T, tau2. Unequal grids drop
/// n-bar = 13 with f = .75.
std::vector<Scenario> scenario_grid(const GridSpec& spec);

struct RunConfig {
    std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
    std::vector<TauMethod> estimators{kAllTauMethods.begin(), kAllTauMethods.end()};
    std::uint64_t seed = 1;
    int chunks = 10;
    /// 0 picks min(chunks, hardware threads).
    int threads = 0;
    VarianceMode variances = VarianceMode::Estimated;
    /// Unset: approximations use the generating tau2. Set: they use this estimate.
    std::optional<TauMethod> plugin;
    /// Fixed tau2 for the approximations; ignored when `plugin` is set.
    std::optional<double> fixed_tau2;
    /// Keep per-replication p-values (generating parameters) in the result.
    bool keep_pvalues = false;
};

struct MethodResult {
    Method method;
    /// #(p < grid point), generating (or plug-in) parameters.
    std::array<std::int64_t, kPGrid.size()> below{};
    /// #(p < alpha) with tau2 = 0 parameters.
    std::array<std::int64_t, kAlphaGrid.size()> rejections{};
    std::int64_t n_valid = 0;
    std::int64_t n_valid_null = 0;
    std::int64_t failures = 0;
    std::int64_t failures_null = 0;
    /// Per replication; NaN where the law could not be formed.
    std::vector<double> pvalues;

    double phat(std::size_t grid_index) const;
    double level(std::size_t alpha_index) const;
};

struct EstimatorResult {
    TauMethod method;
    double mean = 0.0;
    double bias = 0.0;
    double truncated_fraction = 0.0;
    std::int64_t n = 0;
};

struct RunResult {
    Scenario scenario;
    std::vector<MethodResult> methods;
    std::vector<EstimatorResult> estimators;

    const MethodResult& method(Method m) const;
    const EstimatorResult& estimator(TauMethod m) const;
};

/// Upper-tail probabilities of one replication; NaN for unrequested methods
/// and for M3 breakdowns.
struct ReplicationRecord {
    std::array<double, kAllMethods.size()> p{};
    std::array<double, kAllMethods.size()> p_null{};
    std::array<double, kAllTauMethods.size()> tau2{};
    std::array<bool, kAllTauMethods.size()> truncated{};
};

ReplicationRecord evaluate_replication(std::span<const StudySummary> studies, const Scenario& sc,
                                       const RunConfig& cfg);

/// Replication r of cell `sc` always uses stream (derive_key(seed, fnv1a(id)), r),
/// so the result does not depend on chunks or threads.
RunResult run_cell(const Scenario& sc, const RunConfig& cfg);

struct SimulationConfig {
    GridSpec grid;
    RunConfig run;
};

/// JSON object with optional keys: pattern, K, n, f, sigma2T, tau2, reps,
/// seed, chunks, threads, methods, estimators, tau2_policy ("generating", an
/// estimator name or a number), variances ("estimated" or "known").
SimulationConfig parse_simulation_config(const std::string& json_text);

/// Applies a tau2 policy string ("generating", estimator name or value) to `cfg`.
void set_tau2_policy(RunConfig& cfg, const std::string& policy);
std::string tau2_policy_string(const RunConfig& cfg);

/// Long format: cell_id,K,n_pattern,f,sigma2T,tau2,method,metric,value.
void write_results_header(std::ostream& out);
void write_results_rows(std::ostream& out, std::size_t cell_id, const RunResult& result);

/// Seed, generator, variate methods, reps, chunks and code version.
void write_metadata_json(std::ostream& out, const SimulationConfig& cfg, std::size_t cells);

}  // namespace qsw
