#include "qsw/meta_core.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "qsw/error.hpp"
#include "qsw/kernels.hpp"

namespace qsw {

void StudySummary::validate() const {
    if (n_treat < 2 || n_ctrl < 2) throw DomainError("study arm sizes must be at least 2");
    if (!(var_treat > 0.0) || !(var_ctrl > 0.0) || !std::isfinite(var_treat) || !std::isfinite(var_ctrl))
        throw DomainError("study arm variances must be positive and finite");
    if (!std::isfinite(effect)) throw DomainError("study effect must be finite");
}

std::string to_string(WeightKind kind) {
    switch (kind) {
        case WeightKind::EffectiveSampleSize: return "effective_sample_size";
        case WeightKind::InverseVariance: return "inverse_variance";
        case WeightKind::Custom: return "custom";
    }
    return "unknown";
}

WeightScheme::WeightScheme(std::vector<double> weights, WeightKind kind, double tau2)
    : weights_(std::move(weights)), kind_(kind), tau2_(tau2) {
    if (weights_.empty()) throw DomainError("no studies");
    for (double w : weights_) {
        if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("weights must be positive and finite");
        total_ += w;
    }
    normalized_.reserve(weights_.size());
    double sum_q = 0.0;
    for (double w : weights_) {
        normalized_.push_back(w / total_);
        sum_q += normalized_.back();
    }
    if (std::abs(sum_q - 1.0) > 1e-12) throw DomainError("normalized weights do not sum to one");
}

ModelState::ModelState(double tau2, std::vector<double> cond_vars, double mu)
    : tau2_(tau2), cond_vars_(std::move(cond_vars)), mu_(mu) {
    if (!(tau2_ >= 0.0) || !std::isfinite(tau2_)) throw DomainError("tau2 must be nonnegative");
    if (cond_vars_.size() < 2) throw DomainError("model needs at least two studies");
    for (double v : cond_vars_)
        if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("conditional variances must be positive");
}

std::pair<int, int> arm_split(int n_total, double control_fraction) {
    if (!(control_fraction > 0.0 && control_fraction < 1.0))
        throw DomainError("control fraction must lie in (0, 1)");
    // The slack keeps products like 0.3 * 10 from rounding up past an integer.
    const int n_treat = static_cast<int>(std::ceil((1.0 - control_fraction) * n_total - 1e-9));
    return {n_treat, n_total - n_treat};
}

WeightScheme effective_sample_size_weights(std::span<const StudySummary> studies) {
    if (studies.empty()) throw DomainError("no studies");
    std::vector<double> w;
    w.reserve(studies.size());
    for (const auto& s : studies) {
        s.validate();
        const double nt = s.n_treat, nc = s.n_ctrl;
        w.push_back(nc * nt / (nc + nt));
    }
    return WeightScheme(std::move(w), WeightKind::EffectiveSampleSize);
}

WeightScheme inverse_variance_weights(std::span<const StudySummary> studies, double tau2) {
    if (studies.empty()) throw DomainError("no studies");
    std::vector<double> w;
    w.reserve(studies.size());
    for (const auto& s : studies) {
        const double denom = s.cond_var() + tau2;
        if (!(denom > 0.0)) throw DomainError("inverse-variance weight needs positive variance");
        w.push_back(1.0 / denom);
    }
    return WeightScheme(std::move(w), WeightKind::InverseVariance, tau2);
}

WeightScheme custom_weights(std::vector<double> weights) {
    return WeightScheme(std::move(weights), WeightKind::Custom);
}

double q_statistic(std::span<const double> effects, const WeightScheme& scheme) {
    if (effects.size() != scheme.size()) throw DomainError("q_statistic: length mismatch");
    if (effects.size() < 2) throw DomainError("q_statistic: need at least two studies");
    const double mean = kernels::dot(scheme.weights(), effects) / scheme.total();
    return kernels::weighted_sq_dev(scheme.weights(), effects, mean);
}

SymmetricMatrix q_form_matrix(const WeightScheme& scheme) {
    const std::size_t k = scheme.size();
    const auto q = scheme.normalized();
    const double total = scheme.total();
    SymmetricMatrix a(k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            a(i, j) = total * ((i == j ? q[i] : 0.0) - q[i] * q[j]);
        }
    }
    return a;
}

std::vector<double> effects_of(std::span<const StudySummary> studies) {
    std::vector<double> out;
    out.reserve(studies.size());
    for (const auto& s : studies) out.push_back(s.effect);
    return out;
}

std::vector<double> cond_vars_of(std::span<const StudySummary> studies) {
    std::vector<double> out;
    out.reserve(studies.size());
    for (const auto& s : studies) out.push_back(s.cond_var());
    return out;
}

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& field, std::size_t line_no, const char* what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (field.empty() || used != field.size())
        throw DomainError("line " + std::to_string(line_no) + ": invalid " + what + " '" + field + "'");
    return v;
}

int parse_count(const std::string& field, std::size_t line_no, const char* what) {
    const double v = parse_number(field, line_no, what);
    if (v != std::floor(v) || v < 0 || v > 1e9)
        throw DomainError("line " + std::to_string(line_no) + ": " + what + " must be a whole number");
    return static_cast<int>(v);
}

}  // namespace

std::vector<StudySummary> read_studies_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::vector<StudySummary> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        const auto fields = split_commas(line);
        if (!have_header) {
            const std::vector<std::string> expected{"n_treat", "n_ctrl", "var_treat", "var_ctrl", "effect"};
            if (fields != expected)
                throw DomainError("line " + std::to_string(line_no) +
                                  ": expected header n_treat,n_ctrl,var_treat,var_ctrl,effect");
            have_header = true;
            continue;
        }
        if (fields.size() != 5)
            throw DomainError("line " + std::to_string(line_no) + ": expected 5 fields, found " +
                              std::to_string(fields.size()));
        StudySummary s;
        s.n_treat = parse_count(fields[0], line_no, "n_treat");
        s.n_ctrl = parse_count(fields[1], line_no, "n_ctrl");
        s.var_treat = parse_number(fields[2], line_no, "var_treat");
        s.var_ctrl = parse_number(fields[3], line_no, "var_ctrl");
        s.effect = parse_number(fields[4], line_no, "effect");
        try {
            s.validate();
        } catch (const DomainError& e) {
            throw DomainError("line " + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(s);
    }
    if (!have_header) throw DomainError("study CSV is empty (header required)");
    return out;
}

std::vector<StudySummary> read_studies_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open study file '" + path + "'");
    return read_studies_csv(in);
}

void write_studies_csv(std::ostream& out, std::span<const StudySummary> studies) {
    out << "n_treat,n_ctrl,var_treat,var_ctrl,effect\n";
    char buf[160];
    for (const auto& s : studies) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g\n", s.n_treat, s.n_ctrl, s.var_treat,
                      s.var_ctrl, s.effect);
        out << buf;
    }
}

}  // namespace qsw
