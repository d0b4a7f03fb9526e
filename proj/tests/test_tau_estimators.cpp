#include <cmath>
#include <random>

#include "doctest.h"
#include "qsw/error.hpp"
#include "qsw/qmoments.hpp"
#include "qsw/tau_estimators.hpp"

using namespace qsw;

namespace {

std::vector<StudySummary> heterogeneous(std::mt19937_64& gen, std::size_t K, double tau2) {
    std::uniform_int_distribution<int> n(4, 50);
    std::uniform_real_distribution<double> v(0.5, 2.0);
    std::normal_distribution<double> z;
    std::vector<StudySummary> s;
    for (std::size_t i = 0; i < K; ++i) {
        StudySummary st{n(gen), n(gen), v(gen), v(gen), 0.0};
        st.effect = std::sqrt(st.cond_var() + tau2) * z(gen);
        s.push_back(st);
    }
    return s;
}

// Restricted log-likelihood written out directly.
double reml_ll_oracle(const std::vector<StudySummary>& s, double tau2) {
    double sw = 0.0, swy = 0.0, logdet = 0.0;
    for (const auto& st : s) {
        const double w = 1.0 / (st.cond_var() + tau2);
        sw += w;
        swy += w * st.effect;
        logdet += std::log(st.cond_var() + tau2);
    }
    const double mu = swy / sw;
    double rss = 0.0;
    for (const auto& st : s) rss += (st.effect - mu) * (st.effect - mu) / (st.cond_var() + tau2);
    return -0.5 * (logdet + std::log(sw) + rss);
}

// Maximizer of the oracle likelihood over [0, hi]: coarse grid, then golden section.
double reml_oracle_argmax(const std::vector<StudySummary>& s, double hi) {
    double best = 0.0, best_ll = reml_ll_oracle(s, 0.0);
    const int N = 4000;
    for (int k = 1; k <= N; ++k) {
        const double t = hi * k / N;
        const double ll = reml_ll_oracle(s, t);
        if (ll > best_ll) {
            best_ll = ll;
            best = t;
        }
    }
    double a = std::max(0.0, best - hi / N), b = best + hi / N;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
        const double c = b - g * (b - a), d = a + g * (b - a);
        if (reml_ll_oracle(s, c) > reml_ll_oracle(s, d))
            b = d;
        else
            a = c;
    }
    return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("estimator names round trip") {
    for (TauMethod m : kAllTauMethods) CHECK(parse_tau_method(to_string(m)) == m);
    CHECK(parse_tau_method("reml") == TauMethod::REML);
    CHECK_FALSE(parse_tau_method("PM").has_value());
}

TEST_CASE("SDL solves the first-moment equation") {
    std::mt19937_64 gen(1);
    int untruncated = 0;
    for (int rep = 0; rep < 40; ++rep) {
        const auto s = heterogeneous(gen, 3 + rep % 10, 0.8);
        const auto w = effective_sample_size_weights(s);
        const auto t = sdl(s, w);
        const double q = q_statistic(effects_of(s), w);
        // E(Q) at the estimate equals the observed Q.
        const double eq = q_mean(md_unconditional_moments(ModelState(t.untruncated > 0 ? t.untruncated : 0.0,
                                                                     cond_vars_of(s))),
                                 w);
        if (!t.truncated) {
            ++untruncated;
            CHECK(std::abs(eq - q) <= 1e-10 * std::max(1.0, q));
            CHECK(t.value == t.untruncated);
        } else {
            CHECK(t.value == 0.0);
            CHECK(eq >= q);
        }
    }
    CHECK(untruncated > 20);
}

TEST_CASE("DL closed form") {
    std::mt19937_64 gen(2);
    for (int rep = 0; rep < 20; ++rep) {
        const auto s = heterogeneous(gen, 2 + rep % 9, 0.5);
        double S1 = 0, S2 = 0, Sy = 0;
        for (const auto& st : s) {
            const double w = 1.0 / st.cond_var();
            S1 += w;
            S2 += w * w;
            Sy += w * st.effect;
        }
        double Q = 0;
        for (const auto& st : s) Q += (st.effect - Sy / S1) * (st.effect - Sy / S1) / st.cond_var();
        const double want = (Q - (s.size() - 1.0)) / (S1 - S2 / S1);
        const auto t = dl(s);
        CHECK(t.untruncated == doctest::Approx(want).epsilon(1e-12));
        CHECK(t.value == std::max(0.0, t.untruncated));
        CHECK(t.truncated == (want <= 0.0));
    }
}

TEST_CASE("Mandel-Paule matches its estimating equation") {
    std::mt19937_64 gen(3);
    for (int rep = 0; rep < 30; ++rep) {
        const auto s = heterogeneous(gen, 3 + rep % 8, 1.0);
        const auto t = mandel_paule(s);
        const double k1 = s.size() - 1.0;
        if (t.truncated) {
            CHECK(generalized_q(s, 0.0) <= k1);
            CHECK(t.value == 0.0);
        } else {
            CHECK(std::abs(generalized_q(s, t.value) - k1) < 1e-8);
        }
    }
}

TEST_CASE("REML maximizes the restricted likelihood") {
    std::mt19937_64 gen(4);
    for (int rep = 0; rep < 25; ++rep) {
        const auto s = heterogeneous(gen, 3 + rep % 12, 0.6);
        const auto t = reml(s);
        const double want = reml_oracle_argmax(s, 10.0);
        CAPTURE(rep);
        CHECK(std::abs(t.value - want) < 1e-3);
        // The library likelihood differs from the oracle by a constant only.
        const double d0 = reml_log_likelihood(s, 0.3) - reml_ll_oracle(s, 0.3);
        const double d1 = reml_log_likelihood(s, 2.0) - reml_ll_oracle(s, 2.0);
        CHECK(std::abs(d0 - d1) < 1e-10);
    }
}

TEST_CASE("estimators survive hard Fisher-scoring cases") {
    // REML scoring can cycle; every draw must still converge to the likelihood maximum.
    std::mt19937_64 gen(5);
    for (int rep = 0; rep < 3000; ++rep) {
        const auto s = heterogeneous(gen, 10, rep % 3 == 0 ? 0.0 : 0.4);
        const auto t = reml(s);
        CHECK(t.value >= 0.0);
        if (rep % 100 == 0) CHECK(std::abs(t.value - reml_oracle_argmax(s, 10.0)) < 1e-3);
    }
}

TEST_CASE("equal effects give zero with the truncated flag") {
    std::vector<StudySummary> s = {{10, 10, 1.0, 1.0, 0.3}, {20, 15, 2.0, 1.0, 0.3}, {8, 9, 0.5, 1.5, 0.3}};
    const auto w = effective_sample_size_weights(s);
    for (TauMethod m : kAllTauMethods) {
        CAPTURE(to_string(m));
        const auto t = estimate_tau2(m, s, w);
        CHECK(t.value == 0.0);
        CHECK(t.truncated);
        CHECK(t.method == m);
    }
}

TEST_CASE("estimators are scale equivariant") {
    std::mt19937_64 gen(6);
    const auto s = heterogeneous(gen, 8, 2.0);
    const double a = 3.0;
    auto scaled = s;
    for (auto& st : scaled) {
        st.effect *= a;
        st.var_treat *= a * a;
        st.var_ctrl *= a * a;
    }
    const auto w = effective_sample_size_weights(s);
    for (TauMethod m : kAllTauMethods) {
        CAPTURE(to_string(m));
        const double t = estimate_tau2(m, s, w).value, ts = estimate_tau2(m, scaled, w).value;
        CHECK(ts == doctest::Approx(a * a * t).epsilon(1e-7));
    }
}

TEST_CASE("estimators need two studies") {
    const std::vector<StudySummary> one = {{10, 10, 1.0, 1.0, 0.0}};
    CHECK_THROWS_AS(dl(one), DomainError);
    CHECK_THROWS_AS(reml(one), DomainError);
    CHECK_THROWS_AS(mandel_paule(one), DomainError);
    CHECK_THROWS_AS(sdl(one, custom_weights({1.0})), DomainError);
}
