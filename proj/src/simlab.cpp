#include "qsw/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <ostream>
#include <thread>

#include "json.hpp"
#include "qsw/error.hpp"
#include "qsw/qmoments.hpp"

namespace qsw {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Neumaier compensated sum.
class CompensatedSum {
  public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::fabs(sum_) >= std::fabs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::size_t index_of(Method m) { return static_cast<std::size_t>(m); }
std::size_t index_of(TauMethod m) { return static_cast<std::size_t>(m); }

// NaN on M3 breakdown.
double method_pvalue(Method m, std::span<const StudySummary> studies, const WeightScheme& sw, double tau2) {
    try {
        return method_upper_tail(m, studies, sw, tau2);
    } catch (const M3Breakdown&) {
        return kNaN;
    }
}

std::vector<int> default_sizes(SizePattern pattern, double f) {
    if (pattern == SizePattern::Equal) return {20, 40, 100, 250};
    if (f > 0.5) return {15, 30, 60, 100};
    return {13, 15, 30, 60};
}

}  // namespace

std::string to_string(SizePattern p) { return p == SizePattern::Equal ? "equal" : "unequal"; }

std::array<int, 5> unequal_base(int nbar) {
    switch (nbar) {
        case 13: return {4, 6, 7, 8, 40};
        case 15: return {6, 8, 9, 10, 42};
        case 30: return {12, 16, 18, 20, 84};
        case 60: return {24, 32, 36, 40, 168};
        case 100: return {64, 72, 76, 80, 208};
        case 160: return {124, 132, 136, 140, 268};
        default: break;
    }
    throw DomainError("no unequal size pattern with average " + std::to_string(nbar));
}

std::string Scenario::id() const {
    std::string s = "K=" + std::to_string(K) + ";pattern=" + to_string(pattern) + ";n=" + std::to_string(n_label) +
                    ";sizes=";
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(sizes[i]);
    }
    s += ";f=" + fmt("%.17g", f) + ";s2T=" + fmt("%.17g", sigma2_T) + ";s2C=" + fmt("%.17g", sigma2_C) +
         ";tau2=" + fmt("%.17g", tau2) + ";mu=" + fmt("%.17g", mu);
    return s;
}

void Scenario::validate() const {
    if (K < 2) throw DomainError("scenario needs K >= 2");
    if (sizes.size() != static_cast<std::size_t>(K)) throw DomainError("scenario sizes do not match K");
    if (!(f > 0.0 && f < 1.0)) throw DomainError("control fraction must lie in (0, 1)");
    if (!(sigma2_T > 0.0 && sigma2_C > 0.0)) throw DomainError("arm variances must be positive");
    if (!(tau2 >= 0.0)) throw DomainError("tau2 must be nonnegative");
    if (reps < 1) throw DomainError("reps must be positive");
    for (int n : sizes) {
        const auto [nt, nc] = arm_split(n, f);
        if (nt < 2 || nc < 2)
            throw DomainError("study of size " + std::to_string(n) + " gives an arm below 2 at f = " + fmt("%g", f));
    }
}

Scenario make_scenario(int K, SizePattern pattern, int n_label, double f, double sigma2_T, double tau2, int reps) {
    Scenario sc;
    sc.K = K;
    sc.pattern = pattern;
    sc.n_label = n_label;
    sc.f = f;
    sc.sigma2_T = sigma2_T;
    sc.tau2 = tau2;
    sc.reps = reps;
    if (pattern == SizePattern::Equal) {
        sc.sizes.assign(static_cast<std::size_t>(std::max(K, 0)), n_label);
    } else {
        if (K % 5 != 0) throw DomainError("unequal patterns need K divisible by 5");
        const auto base = unequal_base(n_label);
        for (int rep = 0; rep < K / 5; ++rep) sc.sizes.insert(sc.sizes.end(), base.begin(), base.end());
    }
    sc.validate();
    return sc;
}

StudySummary generate_study(rng::Stream& rng, const Scenario& sc, std::size_t i, VarianceMode mode) {
    if (i >= sc.sizes.size()) throw DomainError("study index out of range");
    const auto [nt, nc] = arm_split(sc.sizes[i], sc.f);
    if (nt < 2 || nc < 2) throw DomainError("arm size below 2");
    StudySummary s;
    s.n_treat = nt;
    s.n_ctrl = nc;
    if (mode == VarianceMode::Estimated) {
        s.var_treat = sc.sigma2_T * rng.chi2(nt - 1) / (nt - 1);
        s.var_ctrl = sc.sigma2_C * rng.chi2(nc - 1) / (nc - 1);
    } else {
        s.var_treat = sc.sigma2_T;
        s.var_ctrl = sc.sigma2_C;
    }
    const double sd = std::sqrt(sc.sigma2_T / nt + sc.sigma2_C / nc + sc.tau2);
    s.effect = sc.mu + sd * rng.normal();
    return s;
}

std::vector<StudySummary> generate_studies(rng::Stream& rng, const Scenario& sc, VarianceMode mode) {
    std::vector<StudySummary> out;
    out.reserve(sc.sizes.size());
    for (std::size_t i = 0; i < sc.sizes.size(); ++i) out.push_back(generate_study(rng, sc, i, mode));
    return out;
}

std::vector<Scenario> scenario_grid(const GridSpec& spec) {
    for (double f : spec.f)
        if (!(f > 0.0 && f < 1.0)) throw DomainError("control fraction must lie in (0, 1)");
    std::vector<Scenario> out;
    for (int K : spec.K) {
        // Sizes are listed per f for unequal defaults, so collect the union in order.
        std::vector<int> ns = spec.n;
        if (ns.empty()) {
            for (double f : spec.f)
                for (int n : default_sizes(spec.pattern, f))
                    if (std::find(ns.begin(), ns.end(), n) == ns.end()) ns.push_back(n);
            std::sort(ns.begin(), ns.end());
        }
        for (int n : ns) {
            for (double f : spec.f) {
                if (spec.pattern == SizePattern::Unequal) {
                    if (n == 13 && f > 0.5) continue;
                    if (spec.n.empty()) {
                        const auto d = default_sizes(spec.pattern, f);
                        if (std::find(d.begin(), d.end(), n) == d.end()) continue;
                    }
                }
                for (double s2 : spec.sigma2_T)
                    for (double t : spec.tau2) out.push_back(make_scenario(K, spec.pattern, n, f, s2, t, spec.reps));
            }
        }
    }
    return out;
}

double MethodResult::phat(std::size_t grid_index) const {
    return n_valid == 0 ? kNaN : static_cast<double>(below.at(grid_index)) / static_cast<double>(n_valid);
}

double MethodResult::level(std::size_t alpha_index) const {
    return n_valid_null == 0 ? kNaN
                             : static_cast<double>(rejections.at(alpha_index)) / static_cast<double>(n_valid_null);
}

const MethodResult& RunResult::method(Method m) const {
    for (const auto& r : methods)
        if (r.method == m) return r;
    throw DomainError("method " + std::string(to_string(m)) + " was not run");
}

const EstimatorResult& RunResult::estimator(TauMethod m) const {
    for (const auto& r : estimators)
        if (r.method == m) return r;
    throw DomainError("estimator " + std::string(to_string(m)) + " was not run");
}

ReplicationRecord evaluate_replication(std::span<const StudySummary> studies, const Scenario& sc,
                                       const RunConfig& cfg) {
    ReplicationRecord rec;
    rec.p.fill(kNaN);
    rec.p_null.fill(kNaN);
    rec.tau2.fill(kNaN);
    rec.truncated.fill(false);

    const WeightScheme sw = effective_sample_size_weights(studies);

    for (TauMethod t : cfg.estimators) {
        const TauEstimate est = estimate_tau2(t, studies, sw);
        rec.tau2[index_of(t)] = est.value;
        rec.truncated[index_of(t)] = est.truncated;
    }

    double tau_par = cfg.fixed_tau2.value_or(sc.tau2);
    if (cfg.plugin) {
        const double cached = rec.tau2[index_of(*cfg.plugin)];
        tau_par = std::isnan(cached) ? estimate_tau2(*cfg.plugin, studies, sw).value : cached;
    }

    for (Method m : cfg.methods) {
        const double p = method_pvalue(m, studies, sw, tau_par);
        rec.p[index_of(m)] = p;
        rec.p_null[index_of(m)] = tau_par == 0.0 ? p : method_pvalue(m, studies, sw, 0.0);
    }
    return rec;
}

RunResult run_cell(const Scenario& sc, const RunConfig& cfg) {
    sc.validate();
    if (cfg.chunks < 1) throw DomainError("chunks must be positive");
    for (Method m : cfg.methods)
        if (std::count(cfg.methods.begin(), cfg.methods.end(), m) > 1) throw DomainError("duplicate method");

    const rng::Key key = rng::derive_key(cfg.seed, rng::fnv1a(sc.id()));
    const auto reps = static_cast<std::size_t>(sc.reps);
    const auto chunks = static_cast<std::size_t>(cfg.chunks);
    std::vector<ReplicationRecord> records(reps);

    auto run_chunk = [&](std::size_t c) {
        const std::size_t lo = c * reps / chunks;
        const std::size_t hi = (c + 1) * reps / chunks;
        for (std::size_t r = lo; r < hi; ++r) {
            rng::Stream stream(key, r);
            const auto studies = generate_studies(stream, sc, cfg.variances);
            records[r] = evaluate_replication(studies, sc, cfg);
        }
    };

    std::size_t threads = cfg.threads > 0 ? static_cast<std::size_t>(cfg.threads)
                                          : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    threads = std::min(threads, chunks);
    if (threads <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t c = t; c < chunks; c += threads) run_chunk(c);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // Merge in replication order.
    RunResult result;
    result.scenario = sc;
    for (Method m : cfg.methods) {
        MethodResult mr;
        mr.method = m;
        const std::size_t k = index_of(m);
        if (cfg.keep_pvalues) mr.pvalues.reserve(reps);
        for (const auto& rec : records) {
            const double p = rec.p[k];
            if (cfg.keep_pvalues) mr.pvalues.push_back(p);
            if (std::isnan(p)) {
                ++mr.failures;
            } else {
                ++mr.n_valid;
                for (std::size_t g = 0; g < kPGrid.size(); ++g)
                    if (p < kPGrid[g]) ++mr.below[g];
            }
            const double p0 = rec.p_null[k];
            if (std::isnan(p0)) {
                ++mr.failures_null;
            } else {
                ++mr.n_valid_null;
                for (std::size_t a = 0; a < kAlphaGrid.size(); ++a)
                    if (p0 < kAlphaGrid[a]) ++mr.rejections[a];
            }
        }
        result.methods.push_back(std::move(mr));
    }
    for (TauMethod t : cfg.estimators) {
        EstimatorResult er;
        er.method = t;
        const std::size_t k = index_of(t);
        CompensatedSum sum;
        std::int64_t truncated = 0;
        for (const auto& rec : records) {
            sum.add(rec.tau2[k]);
            truncated += rec.truncated[k] ? 1 : 0;
        }
        er.n = static_cast<std::int64_t>(reps);
        er.mean = sum.value() / static_cast<double>(reps);
        er.bias = er.mean - sc.tau2;
        er.truncated_fraction = static_cast<double>(truncated) / static_cast<double>(reps);
        result.estimators.push_back(er);
    }
    return result;
}

namespace {

template <class T>
std::vector<T> json_list(const nlohmann::json& j, const char* key, std::vector<T> fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
}

}  // namespace

SimulationConfig parse_simulation_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DomainError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw DomainError("config must be a JSON object");
    static const std::vector<std::string> known = {"pattern", "K",      "n",          "f",           "sigma2T",
                                                   "tau2",    "reps",   "seed",       "chunks",      "threads",
                                                   "methods", "estimators", "tau2_policy", "variances"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw DomainError("unknown config key '" + it.key() + "'");

    SimulationConfig cfg;
    try {
        const std::string pattern = j.value("pattern", std::string("equal"));
        if (pattern == "equal")
            cfg.grid.pattern = SizePattern::Equal;
        else if (pattern == "unequal")
            cfg.grid.pattern = SizePattern::Unequal;
        else
            throw DomainError("unknown size pattern '" + pattern + "' (expected equal or unequal)");
        cfg.grid.K = json_list<int>(j, "K", cfg.grid.K);
        cfg.grid.n = json_list<int>(j, "n", cfg.grid.n);
        cfg.grid.f = json_list<double>(j, "f", cfg.grid.f);
        cfg.grid.sigma2_T = json_list<double>(j, "sigma2T", cfg.grid.sigma2_T);
        cfg.grid.tau2 = json_list<double>(j, "tau2", cfg.grid.tau2);
        cfg.grid.reps = j.value("reps", cfg.grid.reps);
        cfg.run.seed = j.value("seed", cfg.run.seed);
        cfg.run.chunks = j.value("chunks", cfg.run.chunks);
        cfg.run.threads = j.value("threads", cfg.run.threads);
        if (j.contains("methods")) {
            cfg.run.methods.clear();
            for (const auto& name : json_list<std::string>(j, "methods", {})) {
                const auto m = parse_method(name);
                if (!m) throw DomainError("unknown method '" + name + "'");
                cfg.run.methods.push_back(*m);
            }
        }
        if (j.contains("estimators")) {
            cfg.run.estimators.clear();
            for (const auto& name : json_list<std::string>(j, "estimators", {})) {
                const auto t = parse_tau_method(name);
                if (!t) throw DomainError("unknown estimator '" + name + "'");
                cfg.run.estimators.push_back(*t);
            }
        }
        if (j.contains("tau2_policy")) {
            const auto& v = j.at("tau2_policy");
            set_tau2_policy(cfg.run, v.is_number() ? fmt("%.17g", v.get<double>()) : v.get<std::string>());
        }
        const std::string variances = j.value("variances", std::string("estimated"));
        if (variances == "estimated")
            cfg.run.variances = VarianceMode::Estimated;
        else if (variances == "known")
            cfg.run.variances = VarianceMode::Known;
        else
            throw DomainError("variances must be 'estimated' or 'known'");
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("config has a value of the wrong type: ") + e.what());
    }
    if (cfg.grid.reps < 1) throw DomainError("reps must be positive");
    if (cfg.run.chunks < 1) throw DomainError("chunks must be positive");
    return cfg;
}

void set_tau2_policy(RunConfig& cfg, const std::string& policy) {
    cfg.plugin.reset();
    cfg.fixed_tau2.reset();
    if (policy == "generating") return;
    if (const auto t = parse_tau_method(policy)) {
        cfg.plugin = *t;
        return;
    }
    char* end = nullptr;
    const double v = std::strtod(policy.c_str(), &end);
    if (policy.empty() || end != policy.c_str() + policy.size() || !std::isfinite(v) || v < 0.0)
        throw DomainError("tau2 policy must be 'generating', an estimator name or a nonnegative value; got '" +
                          policy + "'");
    cfg.fixed_tau2 = v;
}

std::string tau2_policy_string(const RunConfig& cfg) {
    if (cfg.plugin) return std::string(to_string(*cfg.plugin));
    if (cfg.fixed_tau2) return fmt("%.17g", *cfg.fixed_tau2);
    return "generating";
}

void write_results_header(std::ostream& out) { out << "cell_id,K,n_pattern,f,sigma2T,tau2,method,metric,value\n"; }

void write_results_rows(std::ostream& out, std::size_t cell_id, const RunResult& result) {
    const Scenario& sc = result.scenario;
    const std::string prefix = std::to_string(cell_id) + ',' + std::to_string(sc.K) + ',' + to_string(sc.pattern) +
                               ':' + std::to_string(sc.n_label) + ',' + fmt("%.12g", sc.f) + ',' +
                               fmt("%.12g", sc.sigma2_T) + ',' + fmt("%.12g", sc.tau2) + ',';
    auto row = [&](std::string_view name, const std::string& metric, double value) {
        out << prefix << name << ',' << metric << ',' << fmt("%.12g", value) << '\n';
    };
    for (const auto& m : result.methods) {
        const auto name = to_string(m.method);
        for (std::size_t g = 0; g < kPGrid.size(); ++g) row(name, "phat@" + fmt("%g", kPGrid[g]), m.phat(g));
        for (std::size_t a = 0; a < kAlphaGrid.size(); ++a)
            row(name, "level@" + fmt("%g", kAlphaGrid[a]), m.level(a));
        row(name, "n_valid", static_cast<double>(m.n_valid));
        row(name, "n_valid_null", static_cast<double>(m.n_valid_null));
        if (m.method == Method::M3SW) {
            row(name, "m3_failures", static_cast<double>(m.failures));
            row(name, "m3_failures_null", static_cast<double>(m.failures_null));
        }
    }
    for (const auto& e : result.estimators) {
        const auto name = to_string(e.method);
        row(name, "mean", e.mean);
        row(name, "bias", e.bias);
        row(name, "truncated", e.truncated_fraction);
    }
}

void write_metadata_json(std::ostream& out, const SimulationConfig& cfg, std::size_t cells) {
    nlohmann::ordered_json j;
    j["code_version"] = QSW_VERSION;
    j["seed"] = cfg.run.seed;
    j["reps"] = cfg.grid.reps;
    j["chunks"] = cfg.run.chunks;
    j["cells"] = cells;
    j["pattern"] = to_string(cfg.grid.pattern);
    j["rng"] = {{"generator", rng::kGeneratorName},
                {"stream", "key = mix(seed, fnv1a(cell id)); counter = (block, replication)"},
                {"normal", rng::kNormalMethod},
                {"chi2", rng::kChi2Method}};
    std::vector<std::string> methods, estimators;
    for (Method m : cfg.run.methods) methods.emplace_back(to_string(m));
    for (TauMethod t : cfg.run.estimators) estimators.emplace_back(to_string(t));
    j["methods"] = methods;
    j["estimators"] = estimators;
    j["tau2_policy"] = tau2_policy_string(cfg.run);
    j["variances"] = cfg.run.variances == VarianceMode::Known ? "known" : "estimated";
    j["p_rule"] = "phat = #(p < grid point) / n_valid";
    out << j.dump(2) << '\n';
}

}  // namespace qsw
