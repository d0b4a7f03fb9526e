// qsw: heterogeneity tests and tau^2 estimation for mean-difference
// meta-analyses, plus the simulation and figure pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qsw/error.hpp"
#include "qsw/report.hpp"
#include "qsw/simlab.hpp"

namespace {

using namespace qsw;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<Method> parse_methods(const std::string& list) {
    if (list == "all") return {kAllMethods.begin(), kAllMethods.end()};
    std::vector<Method> out;
    for (const auto& name : split_list(list)) {
        const auto m = parse_method(name);
        if (!m) throw DomainError("unknown method '" + name + "'");
        out.push_back(*m);
    }
    if (out.empty()) throw DomainError("--methods is empty");
    return out;
}

std::vector<TauMethod> parse_estimators(const std::string& list) {
    if (list == "all") return {kAllTauMethods.begin(), kAllTauMethods.end()};
    std::vector<TauMethod> out;
    for (const auto& name : split_list(list)) {
        const auto t = parse_tau_method(name);
        if (!t) throw DomainError("unknown estimator '" + name + "'");
        out.push_back(*t);
    }
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// One positive weight per line; blank lines and '#' comments are skipped.
std::vector<double> read_weights_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open weights file '" + path + "'");
    std::vector<double> w;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        const std::string tok = line.substr(first, last - first + 1);
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size())
            throw DomainError("weights file line " + std::to_string(lineno) + ": not a number");
        w.push_back(v);
    }
    return w;
}

void write_analysis_csv(const std::string& path, const AnalysisReport& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write '" + path + "'");
    auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    out << "kind,name,value,truncated\n";
    out << "statistic,Q_SW," << num(r.q_sw) << ",\n";
    out << "statistic,Q_IV," << num(r.q_iv) << ",\n";
    out << "parameter,tau2_used," << num(r.tau2_used) << ",\n";
    for (const auto& p : r.p_values) out << "p_value," << to_string(p.method) << ',' << (p.p ? num(*p.p) : "") << ",\n";
    for (const auto& e : r.tau2_estimates)
        out << "tau2," << to_string(e.method) << ',' << num(e.value) << ',' << (e.truncated ? "true" : "false") << '\n';
    if (!out) throw DomainError("cannot write '" + path + "'");
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

int cmd_analyze(const std::string& input, const std::string& weights, const std::string& tau2,
                const std::string& methods, const std::string& estimators, const std::string& csv) {
    std::vector<StudySummary> studies;
    AnalysisOptions opts;
    if (ends_with(input, ".json")) {
        // A saved report: reuse its inputs and options unless overridden.
        const AnalysisReport saved = report_from_json(slurp(input));
        studies = saved.studies;
        opts = saved.options;
    } else {
        studies = read_studies_csv(input);
    }
    if (!weights.empty()) {
        opts.custom_weights.clear();
        if (weights == "sw") {
            opts.weights = WeightKind::EffectiveSampleSize;
        } else if (weights == "iv") {
            opts.weights = WeightKind::InverseVariance;
        } else if (weights.rfind("custom:", 0) == 0) {
            opts.weights = WeightKind::Custom;
            opts.custom_weights = read_weights_file(weights.substr(7));
        } else {
            throw DomainError("--weights must be sw, iv or custom:<file>");
        }
    }
    if (!tau2.empty()) opts.tau2 = Tau2Policy::parse(tau2);
    if (!methods.empty()) opts.methods = parse_methods(methods);
    if (!estimators.empty()) opts.estimators = parse_estimators(estimators);

    const AnalysisReport report = analyze(studies, opts);
    for (const auto& w : report.warnings) std::cerr << "qsw: warning: " << w << '\n';
    std::cout << to_json(report);
    if (!csv.empty()) write_analysis_csv(csv, report);
    return 0;
}

struct SimulateFlags {
    std::string config, outdir;
    std::optional<std::uint64_t> seed;
    std::optional<int> reps, chunks, threads;
    std::string methods, estimators, tau2;
    bool quiet = false;
};

int cmd_simulate(const SimulateFlags& fl) {
    SimulationConfig cfg = parse_simulation_config(slurp(fl.config));
    if (fl.seed) cfg.run.seed = *fl.seed;
    if (fl.reps) cfg.grid.reps = *fl.reps;
    if (fl.chunks) cfg.run.chunks = *fl.chunks;
    if (fl.threads) cfg.run.threads = *fl.threads;
    if (!fl.methods.empty()) cfg.run.methods = parse_methods(fl.methods);
    if (!fl.estimators.empty()) cfg.run.estimators = parse_estimators(fl.estimators);
    if (!fl.tau2.empty()) set_tau2_policy(cfg.run, fl.tau2);
    if (cfg.grid.reps < 1 || cfg.run.chunks < 1) throw DomainError("reps and chunks must be positive");

    const std::vector<Scenario> cells = scenario_grid(cfg.grid);

    std::error_code ec;
    std::filesystem::create_directories(fl.outdir, ec);
    const std::filesystem::path dir(fl.outdir);
    const std::string results_path = (dir / "results.csv").string();
    std::ofstream results(results_path, std::ios::binary);
    if (ec || !results) throw DomainError("output directory '" + fl.outdir + "' is not writable");

    write_results_header(results);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const RunResult r = run_cell(cells[i], cfg.run);
        write_results_rows(results, i, r);
        if (!fl.quiet) {
            for (const auto& m : r.methods)
                if (m.method == Method::M3SW && m.failures > 0)
                    std::cerr << "qsw: warning: cell " << i << ": " << m.failures << " M3 breakdowns\n";
            std::cerr << "qsw: cell " << i + 1 << '/' << cells.size() << " done\n";
        }
    }
    results.close();
    if (!results) throw DomainError("cannot write '" + results_path + "'");

    const std::string meta_path = (dir / "metadata.json").string();
    std::ofstream meta(meta_path, std::ios::binary);
    write_metadata_json(meta, cfg, cells.size());
    if (!meta) throw DomainError("cannot write '" + meta_path + "'");
    std::cout << results_path << '\n' << meta_path << '\n';
    return 0;
}

int cmd_report(const std::string& input, const std::string& family_name, const std::string& outdir) {
    const auto family = parse_family(family_name);
    if (!family) throw DomainError("unknown figure family '" + family_name + "' (B1 to B5)");
    const ResultsTable table = read_results_csv(input);
    for (const auto& path : write_family(table, *family, outdir)) std::cout << path << '\n';
    return 0;
}

int cmd_pivot(const std::string& input, const std::string& metric, const std::string& column,
              const std::string& out_path) {
    const std::string csv = pivot_csv(read_results_csv(input), metric, column);
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream out(out_path, std::ios::binary);
        out << csv;
        if (!out) throw DomainError("cannot write '" + out_path + "'");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneity tests for mean-difference meta-analysis"};
    app.set_version_flag("--version", std::string(QSW_VERSION));
    app.require_subcommand(1);

    std::string a_input, a_weights, a_tau2, a_methods, a_estimators, a_csv;
    auto* analyze = app.add_subcommand("analyze", "Q statistics, p-values and tau^2 estimates for a dataset");
    analyze->add_option("input", a_input, "study CSV (n_treat,n_ctrl,var_treat,var_ctrl,effect) or saved report JSON")
        ->required();
    analyze->add_option("--weights", a_weights, "constant weights: sw, iv or custom:<file>");
    analyze->add_option("--tau2", a_tau2, "tau^2 for the approximations: a value or SDL, DL, MP, REML (default 0)");
    analyze->add_option("--methods", a_methods, "comma-separated methods or 'all'");
    analyze->add_option("--estimators", a_estimators, "comma-separated tau^2 estimators or 'all'");
    analyze->add_option("--csv", a_csv, "also write a flat CSV summary");

    SimulateFlags sim;
    auto* simulate = app.add_subcommand("simulate", "run a simulation grid");
    simulate->add_option("config", sim.config, "JSON grid configuration")->required();
    simulate->add_option("outdir", sim.outdir, "output directory")->required();
    simulate->add_option("--seed", sim.seed, "global seed");
    simulate->add_option("--reps", sim.reps, "replications per cell");
    simulate->add_option("--chunks", sim.chunks, "replication chunks");
    simulate->add_option("--threads", sim.threads, "worker threads (0: automatic)");
    simulate->add_option("--methods", sim.methods, "comma-separated methods or 'all'");
    simulate->add_option("--estimators", sim.estimators, "comma-separated tau^2 estimators or 'all'");
    simulate->add_option("--tau2", sim.tau2, "generating, an estimator name or a value");
    simulate->add_flag("--quiet", sim.quiet, "no progress on stderr");

    std::string r_input, r_family, r_out = ".";
    auto* report = app.add_subcommand("report", "draw a figure family from simulation results");
    report->add_option("results", r_input, "results.csv from simulate")->required();
    report->add_option("--family", r_family, "B1, B2, B3, B4 or B5")->required();
    report->add_option("--out", r_out, "output directory");

    std::string p_input, p_metric, p_column = "method", p_out;
    auto* pivot = app.add_subcommand("pivot", "reshape one metric into a wide table");
    pivot->add_option("results", p_input, "results.csv from simulate")->required();
    pivot->add_option("--metric", p_metric, "metric, e.g. level@0.05")->required();
    pivot->add_option("--columns", p_column, "field spread across columns");
    pivot->add_option("--out", p_out, "output file (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze) return cmd_analyze(a_input, a_weights, a_tau2, a_methods, a_estimators, a_csv);
        if (*simulate) return cmd_simulate(sim);
        if (*report) return cmd_report(r_input, r_family, r_out);
        if (*pivot) return cmd_pivot(p_input, p_metric, p_column, p_out);
    } catch (const std::exception& e) {
        std::cerr << "qsw: error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
