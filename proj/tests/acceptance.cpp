// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qsw/error.hpp"
#include "qsw/qdist.hpp"
#include "qsw/qmoments.hpp"
#include "qsw/simlab.hpp"

using namespace qsw;

namespace {

constexpr std::uint64_t kSeed = 12345;
constexpr int kReps = 10000;

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

RunConfig config(std::vector<Method> methods, std::vector<TauMethod> estimators = {}) {
    RunConfig cfg;
    cfg.seed = kSeed;
    cfg.methods = std::move(methods);
    cfg.estimators = std::move(estimators);
    return cfg;
}

std::size_t alpha_index(double a) {
    for (std::size_t i = 0; i < kAlphaGrid.size(); ++i)
        if (kAlphaGrid[i] == a) return i;
    throw DomainError("alpha not on grid");
}

std::size_t p_index(double p) {
    for (std::size_t i = 0; i < kPGrid.size(); ++i)
        if (kPGrid[i] == p) return i;
    throw DomainError("p not on grid");
}

// 1. Moment formulas against Monte Carlo and against the full index expansion.
Outcome moment_oracle() {
    std::mt19937_64 gen(kSeed);
    std::uniform_int_distribution<int> kdist(2, 6);
    std::uniform_real_distribution<double> wdist(0.2, 5.0), vdist(0.1, 2.0), tdist(0.0, 1.0);
    std::normal_distribution<double> z;
    const int draws = 1000000;
    double worst_z = 0.0, worst_rel = 0.0;
    bool ok = true;
    for (int inst = 0; inst < 20; ++inst) {
        const int K = kdist(gen);
        std::vector<double> w(K), v2(K);
        for (auto& x : w) x = wdist(gen);
        for (auto& x : v2) x = vdist(gen);
        const double tau2 = tdist(gen);
        const auto scheme = custom_weights(w);
        const auto um = md_unconditional_moments(ModelState(tau2, v2));
        const auto qm = q_moments(um, scheme);

        std::vector<std::vector<double>> m(7, std::vector<double>(K, 0.0));
        m[2] = um.m2;
        m[3] = um.m3;
        m[4] = um.m4;
        m[5] = um.m5;
        m[6] = um.m6;
        const auto ex = oracle::expanded_q_moments(w, m);
        for (auto [got, want] : {std::pair{qm.mean, ex.e1}, std::pair{qm.variance, ex.e2 - ex.e1 * ex.e1},
                                 std::pair{qm.raw3, ex.e3}}) {
            const double rel = std::abs(got - want) / std::abs(want);
            worst_rel = std::max(worst_rel, rel);
            ok &= rel <= 1e-12;
        }

        std::vector<double> sd(K), th(K), q(draws);
        for (int i = 0; i < K; ++i) sd[i] = std::sqrt(v2[i] + tau2);
        double s1 = 0.0;
        for (int r = 0; r < draws; ++r) {
            for (int i = 0; i < K; ++i) th[i] = sd[i] * z(gen);
            q[r] = q_statistic(th, scheme);
            s1 += q[r];
        }
        const double mean = s1 / draws;
        double c2 = 0, c4 = 0, r3 = 0, r6 = 0;
        for (double x : q) {
            const double d = x - mean;
            c2 += d * d;
            c4 += d * d * d * d;
            r3 += x * x * x;
            r6 += x * x * x * x * x * x;
        }
        c2 /= draws;
        c4 /= draws;
        r3 /= draws;
        r6 /= draws;
        const double se_mean = std::sqrt(c2 / draws);
        const double se_var = std::sqrt((c4 - c2 * c2) / draws);
        const double se_r3 = std::sqrt((r6 - r3 * r3) / draws);
        const double zs[] = {(mean - qm.mean) / se_mean, (c2 - qm.variance) / se_var, (r3 - qm.raw3) / se_r3};
        for (double zz : zs) {
            worst_z = std::max(worst_z, std::abs(zz));
            ok &= std::abs(zz) <= 3.0;
        }
    }
    return {ok, "max |MC z| = " + fmt("%.2f", worst_z) + ", max rel. diff vs expansion = " + fmt("%.1e", worst_rel)};
}

// 2. Known IV weights, equal variances, tau2 = 0: the exact law is chi2_{K-1}.
Outcome null_chi2_reduction() {
    bool ok = true;
    double worst = 0.0;
    for (int K : {2, 3, 5, 10, 30}) {
        for (double v : {0.05, 1.0, 3.0}) {
            const std::vector<double> v2(K, v);
            const auto d = exact_weighted_chi2(ModelState(0.0, v2), custom_weights(std::vector<double>(K, 1.0 / v)));
            const auto& law = std::get<WeightedChi2>(d.params());
            if (law.lambda.size() != 1 || law.multiplicity[0] != K - 1 || std::abs(law.lambda[0] - 1.0) > 1e-12)
                ok = false;
            const double hi = 4.0 * (K - 1) + 20.0;
            for (int g = 1; g <= 100; ++g) {
                const double x = hi * g / 100.0;
                const double diff = std::abs(weighted_chi2_cdf(law, x) - chi2_cdf(x, K - 1.0));
                worst = std::max(worst, diff);
                ok &= diff <= 1e-9;
            }
        }
    }
    return {ok, "max |CDF - chi2 CDF| = " + fmt("%.1e", worst)};
}

// 3. Moment fits to exact chi2_{K-1} moments.
Outcome moment_fit_consistency() {
    bool ok = true;
    double worst = 0.0;
    for (int K : {3, 5, 10, 30}) {
        const double k = K - 1.0;
        const auto qm = QMoments::from_raw(k, k * (k + 2.0), k * (k + 2.0) * (k + 4.0));
        const auto d2 = m2_approx(qm);
        const auto& s = std::get<ScaledChi2>(d2.params());
        const auto d3 = m3_approx(qm);
        const auto& pw = std::get<PowerChi2>(d3.params());
        for (double e : {s.c - 1.0, s.p - k, pw.c - 1.0, pw.p - k, pw.r - 1.0}) {
            worst = std::max(worst, std::abs(e));
            ok &= std::abs(e) <= 1e-6;
        }
    }
    return {ok, "max parameter error = " + fmt("%.1e", worst)};
}

// 4 and 5 share their null cells.
struct NullLevels {
    double f_sw[3], chi2_half[3], chi2_quarter[3];
};

const NullLevels& null_levels() {
    static const NullLevels levels = [] {
        NullLevels out{};
        const int Ks[] = {5, 10, 30};
        const std::size_t a = alpha_index(0.05);
        for (int i = 0; i < 3; ++i) {
            const auto half = run_cell(make_scenario(Ks[i], SizePattern::Equal, 20, 0.5, 1.0, 0.0, kReps),
                                       config({Method::FarebrotherSW, Method::ChiSquareIV}));
            out.f_sw[i] = half.method(Method::FarebrotherSW).level(a);
            out.chi2_half[i] = half.method(Method::ChiSquareIV).level(a);
            const auto quarter = run_cell(make_scenario(Ks[i], SizePattern::Equal, 20, 0.75, 1.0, 0.0, kReps),
                                          config({Method::ChiSquareIV}));
            out.chi2_quarter[i] = quarter.method(Method::ChiSquareIV).level(a);
        }
        return out;
    }();
    return levels;
}

Outcome farebrother_level() {
    const auto& l = null_levels();
    bool ok = true;
    std::string d = "level@.05 for K = 5, 10, 30:";
    for (double v : l.f_sw) {
        ok &= std::abs(v - 0.05) <= 0.01;
        d += " " + fmt("%.4f", v);
    }
    return {ok, d};
}

Outcome chi2_liberality() {
    const auto& l = null_levels();
    const bool ok = l.chi2_half[0] >= 0.07 && l.chi2_half[1] >= 0.09 && l.chi2_quarter[0] >= 0.10 &&
                    l.chi2_quarter[1] >= 0.10 && l.chi2_quarter[2] >= 0.10;
    std::string d = "f=.5: K=5 " + fmt("%.4f", l.chi2_half[0]) + ", K=10 " + fmt("%.4f", l.chi2_half[1]) +
                    "; f=.75:";
    for (double v : l.chi2_quarter) d += " " + fmt("%.4f", v);
    return {ok, d};
}

// 6. SDL bias for K = 10 small studies.
Outcome sdl_bias() {
    bool ok = true;
    double worst = 0.0;
    int dl_worse = 0, cells = 0;
    for (int t = 3; t <= 10; ++t) {
        const double tau2 = t / 10.0;
        const auto r = run_cell(make_scenario(10, SizePattern::Equal, 20, 0.5, 1.0, tau2, kReps),
                                config({}, {TauMethod::SDL, TauMethod::DL}));
        const double b_sdl = r.estimator(TauMethod::SDL).bias, b_dl = r.estimator(TauMethod::DL).bias;
        worst = std::max(worst, std::abs(b_sdl));
        ok &= std::abs(b_sdl) <= 0.05;
        ok &= std::abs(b_sdl) < std::abs(b_dl);
        dl_worse += std::abs(b_sdl) < std::abs(b_dl);
        ++cells;
    }
    return {ok, "max |SDL bias| = " + fmt("%.4f", worst) + ", |SDL| < |DL| in " + std::to_string(dl_worse) + "/" +
                    std::to_string(cells) + " cells"};
}

// 7. M2 against Farebrother over the whole p-grid.
Outcome m2_vs_farebrother() {
    const auto r = run_cell(make_scenario(10, SizePattern::Equal, 20, 0.5, 1.0, 0.0, kReps),
                            config({Method::FarebrotherSW, Method::M2SW}));
    const auto& f = r.method(Method::FarebrotherSW);
    const auto& m2 = r.method(Method::M2SW);
    double sup = 0.0;
    for (std::size_t g = 0; g < kPGrid.size(); ++g) sup = std::max(sup, std::abs(m2.phat(g) - f.phat(g)));
    return {sup <= 0.01, "sup |phat_M2 - phat_F| = " + fmt("%.4f", sup)};
}

// 8. BJ against Farebrother under heterogeneity.
Outcome bj_liberality() {
    const auto r = run_cell(make_scenario(30, SizePattern::Equal, 20, 0.5, 1.0, 0.2, kReps),
                            config({Method::FarebrotherSW, Method::BJIV}));
    const std::size_t g = p_index(0.05);
    const double bj = r.method(Method::BJIV).phat(g), f = r.method(Method::FarebrotherSW).phat(g);
    return {bj - f >= 0.02, "phat@.05 BJ " + fmt("%.4f", bj) + " vs F " + fmt("%.4f", f)};
}

// 9. Byte-identical CSV for different chunkings.
Outcome determinism() {
    const auto sc = make_scenario(10, SizePattern::Unequal, 15, 0.75, 2.0, 0.3, 1000);
    RunConfig cfg;
    cfg.seed = kSeed;
    std::vector<std::string> outputs;
    for (int chunks : {1, 4, 10}) {
        cfg.chunks = chunks;
        std::ostringstream out;
        write_results_header(out);
        write_results_rows(out, 0, run_cell(sc, cfg));
        outputs.push_back(out.str());
    }
    const bool ok = outputs[0] == outputs[1] && outputs[0] == outputs[2];
    return {ok, std::to_string(outputs[0].size()) + " bytes per run, chunks 1/4/10 " +
                    (ok ? "identical" : "differ")};
}

// Kolmogorov limiting distribution with Stephens' small-sample correction.
double ks_pvalue(double d, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double x = (sn + 0.12 + 0.11 / sn) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
    return std::clamp(p, 0.0, 1.0);
}

double ks_uniform(std::vector<double> u) {
    std::sort(u.begin(), u.end());
    const double n = static_cast<double>(u.size());
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        d = std::max({d, (i + 1.0) / n - u[i], u[i] - i / n});
    return d;
}

// 10. Uniformity of the exact law's p-values when the variances are known.
Outcome pvalue_uniformity() {
    int passed = 0;
    std::string d = "KS p-values:";
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        RunConfig cfg = config({Method::FarebrotherSW});
        cfg.seed = seed;
        cfg.variances = VarianceMode::Known;
        cfg.keep_pvalues = true;
        const auto r = run_cell(make_scenario(10, SizePattern::Equal, 20, 0.5, 1.0, 0.0, kReps), cfg);
        const auto& pv = r.method(Method::FarebrotherSW).pvalues;
        const double p = ks_pvalue(ks_uniform(pv), pv.size());
        passed += p > 0.01;
        d += " " + fmt("%.3f", p);
    }
    return {passed >= 9, std::to_string(passed) + "/10 seeds pass at 1%; " + d};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"moment formulas vs Monte Carlo and index expansion", moment_oracle},
        {"null chi-square reduction of the exact law", null_chi2_reduction},
        {"M2/M3 fits recover chi-square parameters", moment_fit_consistency},
        {"Farebrother SW level at .05 within .05 +- .01", farebrother_level},
        {"chi-square IV test is liberal", chi2_liberality},
        {"SDL nearly unbiased and better than DL for K = 10", sdl_bias},
        {"M2 SW indistinguishable from Farebrother SW", m2_vs_farebrother},
        {"BJ IV liberal compared with Farebrother SW", bj_liberality},
        {"results independent of chunking", determinism},
        {"exact p-values uniform (KS at 1%)", pvalue_uniformity},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %zu: %s (%s) [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !o.pass;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
