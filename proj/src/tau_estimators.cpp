#include "qsw/tau_estimators.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "qsw/error.hpp"
#include "qsw/numerics.hpp"

namespace qsw {

std::string_view to_string(TauMethod m) noexcept {
    switch (m) {
        case TauMethod::SDL: return "SDL";
        case TauMethod::DL: return "DL";
        case TauMethod::MP: return "MP";
        case TauMethod::REML: return "REML";
    }
    return "unknown";
}

std::optional<TauMethod> parse_tau_method(std::string_view name) noexcept {
    for (TauMethod m : kAllTauMethods)
        if (to_string(m) == name) return m;
    if (name == "sdl") return TauMethod::SDL;
    if (name == "dl") return TauMethod::DL;
    if (name == "mp") return TauMethod::MP;
    if (name == "reml") return TauMethod::REML;
    return std::nullopt;
}

namespace {

void require_k(std::span<const StudySummary> studies) {
    if (studies.size() < 2) throw DomainError("tau2 estimation needs at least two studies");
}

TauEstimate floored(double raw, TauMethod method, int iterations) {
    TauEstimate out;
    out.method = method;
    out.untruncated = raw;
    out.truncated = !(raw > 0.0);
    out.value = out.truncated ? 0.0 : raw;
    out.iterations = iterations;
    return out;
}

}  // namespace

TauEstimate sdl(std::span<const StudySummary> studies, const WeightScheme& scheme) {
    require_k(studies);
    if (scheme.size() != studies.size()) throw DomainError("studies/weights length mismatch");
    const auto q = scheme.normalized();
    const double qstat = q_statistic(effects_of(studies), scheme);
    double s_a = 0.0, s_av = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double a = q[i] * (1.0 - q[i]);
        s_a += a;
        s_av += a * studies[i].cond_var();
    }
    return floored((qstat / scheme.total() - s_av) / s_a, TauMethod::SDL, 0);
}

TauEstimate dl(std::span<const StudySummary> studies) {
    require_k(studies);
    const WeightScheme iv = inverse_variance_weights(studies, 0.0);
    double s2 = 0.0;
    for (double w : iv.weights()) s2 += w * w;
    const double s1 = iv.total();
    const double denom = s1 - s2 / s1;
    if (!(denom > 1e-12 * s1)) throw DomainError("DL: all weight on a single study");
    const double qiv = q_statistic(effects_of(studies), iv);
    return floored((qiv - (static_cast<double>(studies.size()) - 1.0)) / denom, TauMethod::DL, 0);
}

double generalized_q(std::span<const StudySummary> studies, double tau2) {
    return q_statistic(effects_of(studies), inverse_variance_weights(studies, tau2));
}

TauEstimate mandel_paule(std::span<const StudySummary> studies, const TauOptions& opts) {
    require_k(studies);
    const double target = static_cast<double>(studies.size()) - 1.0;
    const auto profile = [&](double t) { return generalized_q(studies, t) - target; };
    const double at_zero = profile(0.0);
    if (at_zero <= 0.0) {
        TauEstimate out = floored(0.0, TauMethod::MP, 0);
        out.truncated = true;
        return out;
    }
    double vmax = 0.0;
    for (const auto& s : studies) vmax = std::max(vmax, s.cond_var());
    double hi = vmax;
    int doublings = 0;
    while (profile(hi) > 0.0) {
        if (++doublings > 60) throw ConvergenceError("MP: root not bracketed", hi);
        hi *= 2.0;
    }
    const ScalarSolve sol = brent_root(profile, 0.0, hi, opts.tol);
    if (!sol.converged) throw ConvergenceError("MP: " + sol.message, sol.root);
    return floored(sol.root, TauMethod::MP, sol.iterations);
}

double reml_log_likelihood(std::span<const StudySummary> studies, double tau2) {
    double s_w = 0.0, s_wy = 0.0, s_log = 0.0;
    for (const auto& s : studies) {
        const double v = s.cond_var() + tau2;
        s_w += 1.0 / v;
        s_wy += s.effect / v;
        s_log += std::log(v);
    }
    const double mu = s_wy / s_w;
    double rss = 0.0;
    for (const auto& s : studies) {
        const double d = s.effect - mu;
        rss += d * d / (s.cond_var() + tau2);
    }
    return -0.5 * s_log - 0.5 * std::log(s_w) - 0.5 * rss;
}

namespace {

// Twice the restricted score, y'PPy - tr P, and the expected information tr PP.
struct RemlScore {
    double score;
    double info;
};

RemlScore reml_score(std::span<const StudySummary> studies, double tau2) {
    double s_w = 0.0, s_wy = 0.0, s_w2 = 0.0, s_w3 = 0.0;
    for (const auto& s : studies) {
        const double w = 1.0 / (s.cond_var() + tau2);
        s_w += w;
        s_wy += w * s.effect;
        s_w2 += w * w;
        s_w3 += w * w * w;
    }
    const double mu = s_wy / s_w;
    // Py = W (y - mu), so y'PPy = sum w^2 (y - mu)^2
    double ypy = 0.0;
    for (const auto& s : studies) {
        const double w = 1.0 / (s.cond_var() + tau2);
        const double d = s.effect - mu;
        ypy += w * w * d * d;
    }
    const double tr_p = s_w - s_w2 / s_w;
    const double tr_pp = s_w2 - 2.0 * s_w3 / s_w + s_w2 * s_w2 / (s_w * s_w);
    return {ypy - tr_p, tr_pp};
}

}  // namespace

TauEstimate reml(std::span<const StudySummary> studies, const TauOptions& opts) {
    require_k(studies);
    auto score = [&](double t) { return reml_score(studies, t).score; };

    // Fisher scoring from DL. Once the score has changed sign the root is
    // bracketed and finished by Brent, since scoring can contract very slowly
    // when observed and expected information disagree.
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    bool lo_seen = false;
    double tau2 = dl(studies).value;
    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        const RemlScore sc = reml_score(studies, tau2);
        const double step = sc.score / sc.info;
        if (tau2 == 0.0 && sc.score <= 0.0) return floored(std::min(step, 0.0), TauMethod::REML, iter);
        if (sc.score > 0.0) {
            lo = std::max(lo, tau2);
            lo_seen = true;
        } else {
            hi = std::min(hi, tau2);
        }
        if (std::abs(step) <= opts.tol && tau2 + step >= 0.0) return floored(tau2 + step, TauMethod::REML, iter);
        if (lo_seen && std::isfinite(hi)) {
            const ScalarSolve sol = brent_root(score, lo, hi, opts.tol);
            if (!sol.converged) throw ConvergenceError("REML: " + sol.message, sol.root);
            return floored(sol.root, TauMethod::REML, iter + sol.iterations);
        }
        tau2 = std::max(tau2 + step, 0.0);
    }
    throw ConvergenceError("REML: Fisher scoring did not converge", tau2);
}

TauEstimate estimate_tau2(TauMethod method, std::span<const StudySummary> studies, const WeightScheme& constant) {
    switch (method) {
        case TauMethod::SDL: return sdl(studies, constant);
        case TauMethod::DL: return dl(studies);
        case TauMethod::MP: return mandel_paule(studies);
        case TauMethod::REML: return reml(studies);
    }
    throw DomainError("unknown tau2 estimator");
}

}  // namespace qsw
