#include "qsw/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "qsw/error.hpp"
#include "qsw/numerics.hpp"
#include "qsw/simlab.hpp"

namespace qsw {

namespace {

using nlohmann::ordered_json;

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string weights_name(WeightKind k) {
    switch (k) {
        case WeightKind::EffectiveSampleSize: return "sw";
        case WeightKind::InverseVariance: return "iv";
        case WeightKind::Custom: return "custom";
    }
    return "sw";
}

WeightKind parse_weights_name(const std::string& s) {
    if (s == "sw") return WeightKind::EffectiveSampleSize;
    if (s == "iv") return WeightKind::InverseVariance;
    if (s == "custom") return WeightKind::Custom;
    throw DomainError("unknown weight scheme '" + s + "'");
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

WeightScheme constant_scheme(const std::vector<StudySummary>& studies, const AnalysisOptions& opt) {
    switch (opt.weights) {
        case WeightKind::EffectiveSampleSize: return effective_sample_size_weights(studies);
        case WeightKind::InverseVariance: return inverse_variance_weights(studies, 0.0);
        case WeightKind::Custom:
            if (opt.custom_weights.size() != studies.size())
                throw DomainError("custom weights: expected " + std::to_string(studies.size()) + " weights, got " +
                                  std::to_string(opt.custom_weights.size()));
            return custom_weights(opt.custom_weights);
    }
    throw DomainError("unknown weight scheme");
}

}  // namespace

Tau2Policy Tau2Policy::parse(const std::string& text) {
    if (text == "generating")
        throw DomainError("tau2 policy 'generating' only applies to simulations; give a value or an estimator");
    Tau2Policy p;
    if (const auto t = parse_tau_method(text)) {
        p.estimator = *t;
        return p;
    }
    double v = 0.0;
    if (!parse_double(text, v) || !std::isfinite(v) || v < 0.0)
        throw DomainError("tau2 policy must be a nonnegative number or one of SDL, DL, MP, REML; got '" + text + "'");
    p.value = v;
    return p;
}

std::string Tau2Policy::to_string() const {
    if (estimator) return std::string(qsw::to_string(*estimator));
    // Shortest form that reads back exactly.
    for (int digits = 1; digits < 17; ++digits) {
        const std::string spec = "%." + std::to_string(digits) + "g";
        const std::string s = fmt(spec.c_str(), value);
        if (std::strtod(s.c_str(), nullptr) == value) return s;
    }
    return fmt("%.17g", value);
}

AnalysisReport analyze(const std::vector<StudySummary>& studies, const AnalysisOptions& options) {
    if (studies.size() < 2) throw DomainError("analysis needs at least two studies (K >= 2)");
    for (std::size_t i = 0; i < studies.size(); ++i) {
        try {
            studies[i].validate();
        } catch (const DomainError& e) {
            throw DomainError("study " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    AnalysisReport rep;
    rep.studies = studies;
    rep.options = options;

    const WeightScheme constant = constant_scheme(studies, options);
    const WeightScheme iv = inverse_variance_weights(studies, 0.0);
    rep.constant_weights.assign(constant.weights().begin(), constant.weights().end());
    rep.iv_weights.assign(iv.weights().begin(), iv.weights().end());
    const std::vector<double> effects = effects_of(studies);
    rep.q_sw = q_statistic(effects, constant);
    rep.q_iv = q_statistic(effects, iv);

    for (TauMethod t : options.estimators) rep.tau2_estimates.push_back(estimate_tau2(t, studies, constant));

    rep.tau2_used = options.tau2.value;
    if (options.tau2.estimator) {
        const TauMethod want = *options.tau2.estimator;
        const auto it = std::find_if(rep.tau2_estimates.begin(), rep.tau2_estimates.end(),
                                     [want](const TauEstimate& e) { return e.method == want; });
        rep.tau2_used = it != rep.tau2_estimates.end() ? it->value : estimate_tau2(want, studies, constant).value;
    }

    for (Method m : options.methods) {
        MethodPValue mp{m, std::nullopt};
        try {
            mp.p = method_upper_tail(m, studies, constant, rep.tau2_used);
        } catch (const M3Breakdown& e) {
            rep.warnings.push_back(std::string(to_string(m)) + ": " + e.what());
        }
        rep.p_values.push_back(mp);
    }
    return rep;
}

std::string to_json(const AnalysisReport& r) {
    ordered_json j;
    j["code_version"] = QSW_VERSION;
    ordered_json opt;
    opt["weights"] = weights_name(r.options.weights);
    if (r.options.weights == WeightKind::Custom) opt["custom_weights"] = r.options.custom_weights;
    opt["tau2"] = r.options.tau2.to_string();
    std::vector<std::string> methods, estimators;
    for (Method m : r.options.methods) methods.emplace_back(to_string(m));
    for (TauMethod t : r.options.estimators) estimators.emplace_back(to_string(t));
    opt["methods"] = methods;
    opt["estimators"] = estimators;
    j["options"] = opt;
    j["K"] = r.studies.size();
    j["Q_SW"] = r.q_sw;
    j["Q_IV"] = r.q_iv;
    j["tau2_used"] = r.tau2_used;
    ordered_json pv = ordered_json::object();
    for (const auto& p : r.p_values) pv[std::string(to_string(p.method))] = p.p ? ordered_json(*p.p) : ordered_json();
    j["p_values"] = pv;
    ordered_json te = ordered_json::object();
    for (const auto& e : r.tau2_estimates)
        te[std::string(to_string(e.method))] = {{"value", e.value},
                                                {"untruncated", e.untruncated},
                                                {"truncated", e.truncated},
                                                {"iterations", e.iterations}};
    j["tau2_estimates"] = te;
    ordered_json st = ordered_json::array();
    for (std::size_t i = 0; i < r.studies.size(); ++i) {
        const auto& s = r.studies[i];
        st.push_back({{"n_treat", s.n_treat},
                      {"n_ctrl", s.n_ctrl},
                      {"var_treat", s.var_treat},
                      {"var_ctrl", s.var_ctrl},
                      {"effect", s.effect},
                      {"weight", r.constant_weights.at(i)},
                      {"iv_weight", r.iv_weights.at(i)}});
    }
    j["studies"] = st;
    j["warnings"] = r.warnings;
    return j.dump(2) + "\n";
}

AnalysisReport report_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DomainError(std::string("report is not valid JSON: ") + e.what());
    }
    AnalysisReport r;
    try {
        const auto& opt = j.at("options");
        r.options.weights = parse_weights_name(opt.at("weights").get<std::string>());
        if (opt.contains("custom_weights")) r.options.custom_weights = opt.at("custom_weights").get<std::vector<double>>();
        r.options.tau2 = Tau2Policy::parse(opt.at("tau2").get<std::string>());
        r.options.methods.clear();
        for (const auto& name : opt.at("methods").get<std::vector<std::string>>()) {
            const auto m = parse_method(name);
            if (!m) throw DomainError("report names unknown method '" + name + "'");
            r.options.methods.push_back(*m);
        }
        r.options.estimators.clear();
        for (const auto& name : opt.at("estimators").get<std::vector<std::string>>()) {
            const auto t = parse_tau_method(name);
            if (!t) throw DomainError("report names unknown estimator '" + name + "'");
            r.options.estimators.push_back(*t);
        }
        r.q_sw = j.at("Q_SW").get<double>();
        r.q_iv = j.at("Q_IV").get<double>();
        r.tau2_used = j.at("tau2_used").get<double>();
        for (auto it = j.at("p_values").begin(); it != j.at("p_values").end(); ++it) {
            const auto m = parse_method(it.key());
            if (!m) throw DomainError("report names unknown method '" + it.key() + "'");
            r.p_values.push_back({*m, it->is_null() ? std::nullopt : std::optional<double>(it->get<double>())});
        }
        for (auto it = j.at("tau2_estimates").begin(); it != j.at("tau2_estimates").end(); ++it) {
            const auto t = parse_tau_method(it.key());
            if (!t) throw DomainError("report names unknown estimator '" + it.key() + "'");
            TauEstimate e;
            e.method = *t;
            e.value = it->at("value").get<double>();
            e.untruncated = it->at("untruncated").get<double>();
            e.truncated = it->at("truncated").get<bool>();
            e.iterations = it->at("iterations").get<int>();
            r.tau2_estimates.push_back(e);
        }
        for (const auto& s : j.at("studies")) {
            StudySummary ss;
            ss.n_treat = s.at("n_treat").get<int>();
            ss.n_ctrl = s.at("n_ctrl").get<int>();
            ss.var_treat = s.at("var_treat").get<double>();
            ss.var_ctrl = s.at("var_ctrl").get<double>();
            ss.effect = s.at("effect").get<double>();
            r.studies.push_back(ss);
            r.constant_weights.push_back(s.at("weight").get<double>());
            r.iv_weights.push_back(s.at("iv_weight").get<double>());
        }
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("report JSON is missing a field or has a wrong type: ") + e.what());
    }
    if (j.contains("K") && j.at("K").get<std::size_t>() != r.studies.size())
        throw DomainError("report K does not match its study table");
    return r;
}

// ---------------------------------------------------------------------------
// Results table

std::string ResultRow::pattern() const { return n_pattern.substr(0, n_pattern.find(':')); }

int ResultRow::n() const {
    const auto colon = n_pattern.find(':');
    return colon == std::string::npos ? 0 : std::atoi(n_pattern.c_str() + colon + 1);
}

ResultsTable read_results_csv(std::istream& in) {
    static const std::string header = "cell_id,K,n_pattern,f,sigma2T,tau2,method,metric,value";
    std::string line;
    if (!std::getline(in, line)) throw DomainError("results CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw DomainError("results CSV line 1: expected header '" + header + "'");
    ResultsTable table;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        const std::string where = "results CSV line " + std::to_string(lineno) + ": ";
        if (fields.size() != 9) throw DomainError(where + "expected 9 fields, got " + std::to_string(fields.size()));
        ResultRow r;
        double cell = 0.0, K = 0.0;
        if (!parse_double(fields[0], cell) || !parse_double(fields[1], K) || !parse_double(fields[3], r.f) ||
            !parse_double(fields[4], r.sigma2_T) || !parse_double(fields[5], r.tau2) ||
            !parse_double(fields[8], r.value))
            throw DomainError(where + "non-numeric field");
        r.cell_id = static_cast<std::size_t>(cell);
        r.K = static_cast<int>(K);
        r.n_pattern = fields[2];
        r.method = fields[6];
        r.metric = fields[7];
        if (r.n_pattern.find(':') == std::string::npos) throw DomainError(where + "n_pattern must look like equal:20");
        table.push_back(std::move(r));
    }
    if (table.empty()) throw DomainError("results CSV has no data rows");
    return table;
}

ResultsTable read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open results file '" + path + "'");
    return read_results_csv(in);
}

// ---------------------------------------------------------------------------
// Figure families

std::optional<Family> parse_family(const std::string& name) {
    static const std::array<std::string, 5> names = {"B1", "B2", "B3", "B4", "B5"};
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::string lower = names[i];
        lower[0] = 'b';
        if (name == names[i] || name == lower) return static_cast<Family>(i);
    }
    return std::nullopt;
}

std::string to_string(Family f) { return "B" + std::to_string(static_cast<int>(f) + 1); }

namespace {

std::string method_label(const std::string& method) {
    static const std::map<std::string, std::string> labels = {
        {"FarebrotherSW", "F SW"}, {"M2SW", "M2 SW"}, {"M3SW", "M3 SW"}, {"ChiSquareIV", "χ² IV"},
        {"WelchIV", "Welch IV"},   {"BJIV", "BJ IV"}};
    const auto it = labels.find(method);
    return it == labels.end() ? method : it->second;
}

// metric "phat@0.05" -> ("phat", 0.05)
bool split_metric(const std::string& metric, std::string& name, double& at) {
    const auto pos = metric.find('@');
    if (pos == std::string::npos) {
        name = metric;
        at = 0.0;
        return true;
    }
    name = metric.substr(0, pos);
    return parse_double(metric.substr(pos + 1), at);
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

struct Placement {
    std::string figure;
    std::string caption;
    std::tuple<double, double, double> panel_order;
    std::string panel_title;
    double x;
    double y;
};

struct FamilyRule {
    std::vector<std::string> series;
    std::string metric_name;
    std::vector<double> at;  // empty: no @ argument
    std::string needs;       // for the mismatch message
    std::string x_label, y_label;
    bool probit_x = false;
    bool reference_at = false;  // reference line at the metric's argument
    std::optional<double> reference_y;
    std::function<std::optional<Placement>(const ResultRow&, double at)> place;
};

std::string g(double v) { return fmt("%g", v); }

std::string nk_title(const ResultRow& r) {
    return (r.pattern() == "equal" ? "n = " : "n̄ = ") + std::to_string(r.n()) + "; K = " + std::to_string(r.K);
}

std::string setting(const ResultRow& r) {
    return "σ²T = " + g(r.sigma2_T) + ", f = " + g(r.f) + ", " + r.pattern() + " sizes";
}

FamilyRule rule_for(Family family) {
    FamilyRule rule;
    switch (family) {
        case Family::B1:
            rule.series = {"FarebrotherSW", "M3SW", "M2SW", "ChiSquareIV", "WelchIV"};
            rule.metric_name = "phat";
            rule.at.assign(kPGrid.begin(), kPGrid.end());
            rule.needs = "phat@p rows at tau2 = 0";
            rule.x_label = "p";
            rule.y_label = "P̂(Q > t) − p";
            rule.probit_x = true;
            rule.reference_y = 0.0;
            rule.place = [](const ResultRow& r, double at) -> std::optional<Placement> {
                if (r.tau2 != 0.0) return std::nullopt;
                return Placement{"B1_" + r.pattern() + "_s2T" + g(r.sigma2_T) + "_f" + g(r.f),
                                 "Error of the null approximations, tau2 = 0, " + setting(r),
                                 {r.n(), r.K, 0.0}, nk_title(r), at, r.value - at};
            };
            break;
        case Family::B2:
            rule.series = {"FarebrotherSW", "M3SW", "M2SW", "WelchIV"};
            rule.metric_name = "level";
            rule.at = {.001, .005, .01, .05};
            rule.needs = "level@alpha rows at tau2 = 0";
            rule.x_label = "n";
            rule.y_label = "empirical level";
            rule.reference_at = true;
            rule.place = [](const ResultRow& r, double at) -> std::optional<Placement> {
                if (r.tau2 != 0.0) return std::nullopt;
                return Placement{"B2_" + r.pattern() + "_alpha" + g(at),
                                 "Empirical level at alpha = " + g(at) + " versus study size, " + r.pattern() +
                                     " sizes, tau2 = 0",
                                 {r.f, r.sigma2_T, r.K},
                                 "f = " + g(r.f) + "; σ²T = " + g(r.sigma2_T) + "; K = " + std::to_string(r.K),
                                 static_cast<double>(r.n()), r.value};
            };
            break;
        case Family::B3:
        case Family::B4: {
            const bool b3 = family == Family::B3;
            rule.series = b3 ? std::vector<std::string>{"FarebrotherSW", "M3SW", "M2SW", "BJIV"}
                             : std::vector<std::string>{"FarebrotherSW", "M3SW", "M2SW", "ChiSquareIV", "WelchIV"};
            rule.metric_name = b3 ? "phat" : "level";
            rule.at = {.01, .05};
            rule.needs = b3 ? "phat@0.01 or phat@0.05 rows" : "level@0.01 or level@0.05 rows";
            rule.x_label = "τ²";
            rule.y_label = b3 ? "empirical p-value" : "power";
            rule.reference_at = b3;
            const std::string stem = b3 ? "B3_" : "B4_";
            const std::string what = b3 ? "Empirical p-values" : "Power of the heterogeneity test";
            rule.place = [stem, what](const ResultRow& r, double at) -> std::optional<Placement> {
                return Placement{stem + r.pattern() + "_alpha" + g(at) + "_s2T" + g(r.sigma2_T) + "_f" + g(r.f),
                                 what + " at alpha = " + g(at) + " versus tau2, " + setting(r),
                                 {r.n(), r.K, 0.0}, nk_title(r), r.tau2, r.value};
            };
            break;
        }
        case Family::B5:
            rule.series = {"SDL", "DL", "REML", "MP"};
            rule.metric_name = "bias";
            rule.needs = "bias rows for SDL, DL, REML or MP";
            rule.x_label = "τ²";
            rule.y_label = "bias of τ̂²";
            rule.reference_y = 0.0;
            rule.place = [](const ResultRow& r, double) -> std::optional<Placement> {
                return Placement{"B5_" + r.pattern() + "_s2T" + g(r.sigma2_T) + "_f" + g(r.f),
                                 "Bias of tau2 estimators versus tau2, " + setting(r) +
                                     " (CDL is not implemented and not shown)",
                                 {r.n(), r.K, 0.0}, nk_title(r), r.tau2, r.value};
            };
            break;
    }
    return rule;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::vector<Figure> build_family(const ResultsTable& table, Family family) {
    if (table.empty()) throw DomainError("results table is empty");
    const FamilyRule rule = rule_for(family);

    struct PanelAcc {
        std::string title;
        std::map<std::string, std::vector<std::pair<double, double>>> series;
    };
    struct FigAcc {
        std::string caption;
        std::optional<double> reference;
        std::map<std::tuple<double, double, double>, PanelAcc> panels;
    };
    std::map<std::string, FigAcc> figs;

    for (const auto& row : table) {
        if (std::find(rule.series.begin(), rule.series.end(), row.method) == rule.series.end()) continue;
        std::string name;
        double at = 0.0;
        if (!split_metric(row.metric, name, at) || name != rule.metric_name) continue;
        if (!rule.at.empty() &&
            std::none_of(rule.at.begin(), rule.at.end(), [at](double a) { return near(at, a); }))
            continue;
        if (std::isnan(row.value)) continue;
        const auto pl = rule.place(row, at);
        if (!pl) continue;
        FigAcc& fig = figs[pl->figure];
        fig.caption = pl->caption;
        fig.reference = rule.reference_at ? std::optional<double>(at) : rule.reference_y;
        PanelAcc& panel = fig.panels[pl->panel_order];
        panel.title = pl->panel_title;
        panel.series[row.method].emplace_back(pl->x, pl->y);
    }

    if (figs.empty()) {
        std::set<std::string> metrics;
        for (const auto& row : table) metrics.insert(row.metric);
        std::string list;
        for (const auto& m : metrics) list += (list.empty() ? "" : ", ") + m;
        throw DomainError("family " + to_string(family) + " needs " + rule.needs + "; available metrics: " + list);
    }

    std::vector<Figure> out;
    for (auto& [name, acc] : figs) {
        Figure fig;
        fig.name = name;
        fig.caption = acc.caption;
        fig.x_label = rule.x_label;
        fig.y_label = rule.y_label;
        fig.probit_x = rule.probit_x;
        fig.reference_y = acc.reference;
        std::set<double> columns;
        for (const auto& [key, panel] : acc.panels) columns.insert(std::get<2>(key) != 0.0 ? std::get<2>(key) : std::get<1>(key));
        fig.columns = std::max<std::size_t>(1, columns.size());
        for (auto& [key, panel] : acc.panels) {
            Panel p;
            p.title = panel.title;
            for (const auto& method : rule.series) {
                auto it = panel.series.find(method);
                if (it == panel.series.end()) continue;
                Series s;
                s.label = method_label(method);
                s.points = it->second;
                std::sort(s.points.begin(), s.points.end());
                p.series.push_back(std::move(s));
            }
            fig.panels.push_back(std::move(p));
        }
        out.push_back(std::move(fig));
    }
    return out;
}

std::string figures_csv(const std::vector<Figure>& figs) {
    std::string out = "figure,panel,series,x,y\n";
    for (const auto& fig : figs)
        for (const auto& panel : fig.panels)
            for (const auto& s : panel.series)
                for (const auto& [x, y] : s.points)
                    out += csv_field(fig.name) + ',' + csv_field(panel.title) + ',' + csv_field(s.label) + ',' +
                           fmt("%.12g", x) + ',' + fmt("%.12g", y) + '\n';
    return out;
}

std::string render_svg(const Figure& fig) {
    struct Style {
        const char* color;
        const char* dash;
        int marker;  // 0 circle, 1 square, 2 triangle, 3 diamond, 4 cross
    };
    static const Style styles[] = {{"#000000", "", 0},      {"#404040", "6,3", 1}, {"#707070", "2,2", 2},
                                   {"#202020", "8,3,2,3", 3}, {"#909090", "", 4},    {"#505050", "1,3", 0}};
    const double pw = 280, ph = 210, ml = 58, mr = 12, mt = 28, mb = 40;
    const std::size_t cols = std::max<std::size_t>(1, fig.columns);
    const std::size_t rows = (fig.panels.size() + cols - 1) / cols;
    const double legend_h = 30, caption_h = 30;
    const double width = cols * pw, height = legend_h + rows * ph + caption_h;

    auto xmap = [&](double x) { return fig.probit_x ? normal_quantile(x) : x; };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<title>" << xml_escape(fig.name) << "</title>\n";
    o << "<desc>" << xml_escape(fig.caption) << "</desc>\n";
    o << "<metadata><![CDATA[\n" << figures_csv({fig}) << "]]></metadata>\n";
    o << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";

    // Legend from the first panel that has every series.
    std::vector<std::string> labels;
    for (const auto& p : fig.panels)
        for (const auto& s : p.series)
            if (std::find(labels.begin(), labels.end(), s.label) == labels.end()) labels.push_back(s.label);
    auto style_of = [&](const std::string& label) {
        const auto i = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), label) - labels.begin());
        return styles[i % std::size(styles)];
    };
    auto marker = [&](double x, double y, const Style& st) {
        std::ostringstream m;
        const double r = 3;
        switch (st.marker) {
            case 0: m << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << st.color << "\"/>"; break;
            case 1: m << "<rect x=\"" << x - r << "\" y=\"" << y - r << "\" width=\"" << 2 * r << "\" height=\"" << 2 * r
                      << "\" fill=\"none\" stroke=\"" << st.color << "\"/>"; break;
            case 2: m << "<path d=\"M" << x << ' ' << y - r << " L" << x + r << ' ' << y + r << " L" << x - r << ' '
                      << y + r << " Z\" fill=\"" << st.color << "\"/>"; break;
            case 3: m << "<path d=\"M" << x << ' ' << y - r << " L" << x + r << ' ' << y << " L" << x << ' ' << y + r
                      << " L" << x - r << ' ' << y << " Z\" fill=\"none\" stroke=\"" << st.color << "\"/>"; break;
            default: m << "<path d=\"M" << x - r << ' ' << y - r << " L" << x + r << ' ' << y + r << " M" << x + r << ' '
                       << y - r << " L" << x - r << ' ' << y + r << "\" stroke=\"" << st.color << "\"/>"; break;
        }
        return m.str();
    };
    double lx = 10;
    for (const auto& label : labels) {
        const Style st = style_of(label);
        o << "<line x1=\"" << lx << "\" y1=\"15\" x2=\"" << lx + 24 << "\" y2=\"15\" stroke=\"" << st.color
          << "\" stroke-width=\"1.5\"" << (*st.dash ? std::string(" stroke-dasharray=\"") + st.dash + "\"" : "")
          << "/>" << marker(lx + 12, 15, st) << "<text x=\"" << lx + 30 << "\" y=\"19\">" << xml_escape(label)
          << "</text>\n";
        lx += 40 + 7.0 * static_cast<double>(label.size());
    }

    for (std::size_t k = 0; k < fig.panels.size(); ++k) {
        const Panel& panel = fig.panels[k];
        const double ox = static_cast<double>(k % cols) * pw, oy = legend_h + static_cast<double>(k / cols) * ph;
        const double x0 = ox + ml, x1 = ox + pw - mr, y0 = oy + mt, y1 = oy + ph - mb;
        double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
        for (const auto& s : panel.series)
            for (const auto& [x, y] : s.points) {
                xmin = std::min(xmin, xmap(x));
                xmax = std::max(xmax, xmap(x));
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        if (fig.reference_y) {
            ymin = std::min(ymin, *fig.reference_y);
            ymax = std::max(ymax, *fig.reference_y);
        }
        if (!(xmax > xmin)) { xmin -= 0.5; xmax += 0.5; }
        if (!(ymax > ymin)) { ymin -= 0.5 * std::max(1e-3, std::abs(ymin)); ymax += 0.5 * std::max(1e-3, std::abs(ymax)); }
        const double pad = 0.05 * (ymax - ymin);
        ymin -= pad;
        ymax += pad;
        auto px = [&](double x) { return x0 + (xmap(x) - xmin) / (xmax - xmin) * (x1 - x0); };
        auto py = [&](double y) { return y1 - (y - ymin) / (ymax - ymin) * (y1 - y0); };

        o << "<g>\n<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << oy + 16 << "\" text-anchor=\"middle\">"
          << xml_escape(panel.title) << "</text>\n";
        o << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << x1 - x0 << "\" height=\"" << y1 - y0
          << "\" fill=\"none\" stroke=\"#000000\"/>\n";
        for (int t = 0; t <= 4; ++t) {
            const double yv = ymin + (ymax - ymin) * t / 4.0;
            o << "<line x1=\"" << x0 - 4 << "\" y1=\"" << py(yv) << "\" x2=\"" << x0 << "\" y2=\"" << py(yv)
              << "\" stroke=\"#000000\"/><text x=\"" << x0 - 6 << "\" y=\"" << py(yv) + 4
              << "\" text-anchor=\"end\">" << fmt("%.3g", yv) << "</text>\n";
        }
        std::vector<double> xticks;
        if (fig.probit_x) {
            for (double p : {.001, .01, .1, .5, .9, .99, .999})
                if (xmap(p) >= xmin - 1e-12 && xmap(p) <= xmax + 1e-12) xticks.push_back(p);
        } else {
            std::set<double> xs;
            for (const auto& s : panel.series)
                for (const auto& pt : s.points) xs.insert(pt.first);
            const std::size_t step = std::max<std::size_t>(1, xs.size() / 6);
            std::size_t i = 0;
            for (double x : xs)
                if (i++ % step == 0) xticks.push_back(x);
        }
        for (double xv : xticks)
            o << "<line x1=\"" << px(xv) << "\" y1=\"" << y1 << "\" x2=\"" << px(xv) << "\" y2=\"" << y1 + 4
              << "\" stroke=\"#000000\"/><text x=\"" << px(xv) << "\" y=\"" << y1 + 16
              << "\" text-anchor=\"middle\">" << fmt("%g", xv) << "</text>\n";
        o << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << y1 + 32 << "\" text-anchor=\"middle\">"
          << xml_escape(fig.x_label) << "</text>\n";
        o << "<text transform=\"translate(" << ox + 14 << ' ' << (y0 + y1) / 2
          << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(fig.y_label) << "</text>\n";
        if (fig.reference_y)
            o << "<line x1=\"" << x0 << "\" y1=\"" << py(*fig.reference_y) << "\" x2=\"" << x1 << "\" y2=\""
              << py(*fig.reference_y) << "\" stroke=\"#b0b0b0\" stroke-dasharray=\"3,3\"/>\n";
        for (const auto& s : panel.series) {
            const Style st = style_of(s.label);
            o << "<polyline fill=\"none\" stroke=\"" << st.color << "\" stroke-width=\"1.5\""
              << (*st.dash ? std::string(" stroke-dasharray=\"") + st.dash + "\"" : "") << " points=\"";
            for (const auto& [x, y] : s.points) o << fmt("%.2f", px(x)) << ',' << fmt("%.2f", py(y)) << ' ';
            o << "\"/>\n";
            for (const auto& [x, y] : s.points) o << marker(px(x), py(y), st);
            o << '\n';
        }
        o << "</g>\n";
    }
    o << "<text x=\"10\" y=\"" << height - 10 << "\">" << xml_escape(fig.caption)
      << (fig.probit_x ? " (x axis on a normal-quantile scale)" : "") << "</text>\n";
    o << "</svg>\n";
    return o.str();
}

std::vector<std::string> write_family(const ResultsTable& table, Family family, const std::string& outdir) {
    const std::vector<Figure> figs = build_family(table, family);
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& fig : figs) files.emplace_back(fig.name + ".svg", render_svg(fig));
    files.emplace_back(to_string(family) + ".csv", figures_csv(figs));

    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    if (ec || !std::filesystem::is_directory(outdir))
        throw DomainError("cannot create output directory '" + outdir + "'");
    std::vector<std::string> written;
    for (const auto& [name, content] : files) {
        const std::string path = (std::filesystem::path(outdir) / name).string();
        std::ofstream out(path, std::ios::binary);
        out << content;
        if (!out) throw DomainError("cannot write '" + path + "'");
        written.push_back(path);
    }
    return written;
}

std::string pivot_csv(const ResultsTable& table, const std::string& metric, const std::string& column) {
    static const std::vector<std::string> fields = {"K", "n_pattern", "f", "sigma2T", "tau2", "method"};
    if (std::find(fields.begin(), fields.end(), column) == fields.end())
        throw DomainError("pivot column must be one of K, n_pattern, f, sigma2T, tau2, method");
    auto field = [](const ResultRow& r, const std::string& name) -> std::string {
        if (name == "K") return std::to_string(r.K);
        if (name == "n_pattern") return r.n_pattern;
        if (name == "f") return fmt("%.12g", r.f);
        if (name == "sigma2T") return fmt("%.12g", r.sigma2_T);
        if (name == "tau2") return fmt("%.12g", r.tau2);
        return r.method;
    };
    std::vector<std::string> row_fields;
    for (const auto& f : fields)
        if (f != column) row_fields.push_back(f);

    std::vector<std::string> col_values;
    std::vector<std::vector<std::string>> row_keys;
    std::map<std::pair<std::vector<std::string>, std::string>, double> cells;
    for (const auto& r : table) {
        if (r.metric != metric) continue;
        const std::string c = field(r, column);
        if (std::find(col_values.begin(), col_values.end(), c) == col_values.end()) col_values.push_back(c);
        std::vector<std::string> key;
        for (const auto& f : row_fields) key.push_back(field(r, f));
        if (std::find(row_keys.begin(), row_keys.end(), key) == row_keys.end()) row_keys.push_back(key);
        cells[{key, c}] = r.value;
    }
    if (cells.empty()) {
        std::set<std::string> metrics;
        for (const auto& r : table) metrics.insert(r.metric);
        std::string list;
        for (const auto& m : metrics) list += (list.empty() ? "" : ", ") + m;
        throw DomainError("no rows with metric '" + metric + "'; available metrics: " + list);
    }
    std::string out;
    for (const auto& f : row_fields) out += f + ',';
    for (std::size_t i = 0; i < col_values.size(); ++i) out += (i ? "," : "") + csv_field(column + "=" + col_values[i]);
    out += '\n';
    for (const auto& key : row_keys) {
        for (const auto& k : key) out += csv_field(k) + ',';
        for (std::size_t i = 0; i < col_values.size(); ++i) {
            if (i) out += ',';
            const auto it = cells.find({key, col_values[i]});
            if (it != cells.end()) out += fmt("%.12g", it->second);
        }
        out += '\n';
    }
    return out;
}

}  // namespace qsw
