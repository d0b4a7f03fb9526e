#pragma once

// Analysis reports for real datasets, the long-format results table and the
// figure families drawn from it.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qsw/meta_core.hpp"
#include "qsw/qdist.hpp"
#include "qsw/tau_estimators.hpp"

namespace qsw {

/// tau2 for approximation parameters: a fixed value or an estimator's output.
struct Tau2Policy {
    std::optional<TauMethod> estimator;
    double value = 0.0;

    /// "0.25", "REML", ... ; "generating" is rejected (there is no generating value for data).
    static Tau2Policy parse(const std::string& text);
    std::string to_string() const;
    friend bool operator==(const Tau2Policy&, const Tau2Policy&) = default;
};

struct AnalysisOptions {
    /// Constant weights for the Farebrother/M2/M3 family and SDL.
    WeightKind weights = WeightKind::EffectiveSampleSize;
    /// Used when weights == Custom.
    std::vector<double> custom_weights;
    Tau2Policy tau2;
    std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
    std::vector<TauMethod> estimators{kAllTauMethods.begin(), kAllTauMethods.end()};
    friend bool operator==(const AnalysisOptions&, const AnalysisOptions&) = default;
};

struct MethodPValue {
    Method method;
    std::optional<double> p;  // empty on M3 breakdown
    friend bool operator==(const MethodPValue&, const MethodPValue&) = default;
};

struct AnalysisReport {
    std::vector<StudySummary> studies;
    AnalysisOptions options;
    /// Q with the constant weights (effective sample sizes unless overridden).
    double q_sw = 0.0;
    /// Q with weights 1 / v_i^2.
    double q_iv = 0.0;
    double tau2_used = 0.0;
    std::vector<double> constant_weights;
    std::vector<double> iv_weights;
    std::vector<MethodPValue> p_values;
    std::vector<TauEstimate> tau2_estimates;
    std::vector<std::string> warnings;
    friend bool operator==(const AnalysisReport&, const AnalysisReport&) = default;
};

/// Throws DomainError for K < 2 or invalid summaries.
AnalysisReport analyze(const std::vector<StudySummary>& studies, const AnalysisOptions& options);

std::string to_json(const AnalysisReport& report);
/// Inverse of to_json; throws DomainError on malformed input.
AnalysisReport report_from_json(const std::string& text);

/// One line of the long-format simulation output.
struct ResultRow {
    std::size_t cell_id = 0;
    int K = 0;
    std::string n_pattern;  // "equal:20", "unequal:13"
    double f = 0.0;
    double sigma2_T = 0.0;
    double tau2 = 0.0;
    std::string method;
    std::string metric;
    double value = 0.0;

    std::string pattern() const;
    int n() const;
};

using ResultsTable = std::vector<ResultRow>;

/// Throws DomainError naming the line on malformed rows, and on an empty table.
ResultsTable read_results_csv(std::istream& in);
ResultsTable read_results_csv(const std::string& path);

enum class Family { B1, B2, B3, B4, B5 };
std::optional<Family> parse_family(const std::string& name);
std::string to_string(Family f);

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

struct Panel {
    std::string title;
    std::vector<Series> series;
};

struct Figure {
    std::string name;  // file stem
    std::string caption;
    std::string x_label;
    std::string y_label;
    bool probit_x = false;  // x values are probabilities drawn on a normal-quantile axis
    std::optional<double> reference_y;
    std::size_t columns = 1;
    std::vector<Panel> panels;
};

/// Throws DomainError listing the table's metrics when the family's data are absent.
std::vector<Figure> build_family(const ResultsTable& table, Family family);

/// Self-contained SVG; the plotted numbers are embedded as CSV in <metadata>.
std::string render_svg(const Figure& fig);

/// figure,panel,series,x,y for every plotted point.
std::string figures_csv(const std::vector<Figure>& figs);

/// Builds the family, then writes <name>.svg per figure and <family>.csv into
/// `outdir`. Nothing is written when building fails. Returns written paths.
std::vector<std::string> write_family(const ResultsTable& table, Family family, const std::string& outdir);

/// Wide table of one metric: one row per remaining key, one column per
/// distinct value of `column` (method, tau2, K, n_pattern, f or sigma2T).
std::string pivot_csv(const ResultsTable& table, const std::string& metric, const std::string& column);

}  // namespace qsw
