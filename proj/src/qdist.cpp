#include "qsw/qdist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qsw/error.hpp"
#include "qsw/kernels.hpp"
#include "qsw/numerics.hpp"

namespace qsw {

std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::FarebrotherSW: return "FarebrotherSW";
        case Method::M2SW: return "M2SW";
        case Method::M3SW: return "M3SW";
        case Method::ChiSquareIV: return "ChiSquareIV";
        case Method::WelchIV: return "WelchIV";
        case Method::BJIV: return "BJIV";
    }
    return "unknown";
}

std::optional<Method> parse_method(std::string_view name) noexcept {
    for (Method m : kAllMethods)
        if (to_string(m) == name) return m;
    return std::nullopt;
}

namespace {

double clamp01(double p) { return std::min(1.0, std::max(0.0, p)); }

}  // namespace

double weighted_chi2_cdf(const WeightedChi2& law, double x, const SeriesOptions& opts) {
    if (law.lambda.empty() || law.lambda.size() != law.multiplicity.size())
        throw DomainError("weighted chi-square law needs matching eigenvalues and multiplicities");
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;

    const double beta = *std::min_element(law.lambda.begin(), law.lambda.end());
    if (!(beta > 0.0)) throw DomainError("weighted chi-square law needs positive eigenvalues");

    double m = 0.0;
    double log_a0 = 0.0;
    std::vector<double> gamma, coef, power;
    for (std::size_t r = 0; r < law.lambda.size(); ++r) {
        const double h = law.multiplicity[r];
        m += h;
        log_a0 += 0.5 * h * std::log(beta / law.lambda[r]);
        const double g = 1.0 - beta / law.lambda[r];
        if (g > 0.0) {
            gamma.push_back(g);
            coef.push_back(0.5 * h);
            power.push_back(1.0);
        }
    }

    const double z = 0.5 * x / beta;  // chi2 argument halved
    const double log_z = std::log(z);
    double shape = 0.5 * m;
    double cdf_k = gamma_p(shape, z);
    double log_term = shape * log_z - z - ln_gamma(shape + 1.0);  // P(a) - P(a+1)
    auto next_cdf = [&]() {
        const double v = cdf_k - std::exp(log_term);
        return v > 0.0 ? v : 0.0;
    };

    // a_k = scaled_k * exp(log_scale); rescaled when the scaled values get large.
    double log_scale = log_a0;
    std::vector<double> scaled{1.0};
    double sum = cdf_k;
    double mass = 1.0;

    std::size_t cap = 64;
    std::vector<double> g_desc(cap);  // g_i lives at g_desc[cap - i]

    const auto& kt = kernels::active();
    for (int k = 1;; ++k) {
        const double f_next = next_cdf();
        const double true_mass = mass * std::exp(log_scale);
        if (f_next * (1.0 - true_mass) <= opts.tol) break;
        if (k > opts.max_terms)
            throw ConvergenceError("weighted chi-square series did not reach its tolerance", sum * std::exp(log_scale));

        const auto uk = static_cast<std::size_t>(k);
        if (uk > cap) {
            std::vector<double> grown(2 * cap);
            std::copy(g_desc.begin(), g_desc.end(), grown.begin() + static_cast<std::ptrdiff_t>(cap));
            g_desc.swap(grown);
            cap *= 2;
        }
        g_desc[cap - uk] = kt.advance_powers(power.data(), gamma.data(), coef.data(), gamma.size());
        const double a_k = kt.dot(scaled.data(), g_desc.data() + (cap - uk), uk) / k;
        scaled.push_back(a_k);

        log_term += log_z - std::log(shape + 1.0);
        shape += 1.0;
        cdf_k = f_next;
        sum += a_k * cdf_k;
        mass += a_k;

        if (a_k > 1e250) {
            for (double& v : scaled) v *= 1e-250;
            sum *= 1e-250;
            mass *= 1e-250;
            log_scale += 250.0 * std::numbers::ln10;
        }
    }
    return clamp01(sum * std::exp(log_scale));
}

WeightedChi2 quadratic_form_law(std::span<const double> variances, const WeightScheme& scheme,
                                const SeriesOptions& opts) {
    const std::size_t k = scheme.size();
    if (variances.size() != k) throw DomainError("variances/weights length mismatch");
    if (k < 2) throw DomainError("quadratic form law needs at least two studies");
    std::vector<double> root(k);
    for (std::size_t i = 0; i < k; ++i) {
        if (!(variances[i] > 0.0)) throw DomainError("Sigma not PSD: variances must be positive");
        root[i] = std::sqrt(variances[i]);
    }
    const SymmetricMatrix a = q_form_matrix(scheme);
    SymmetricMatrix s(k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) s(i, j) = root[i] * a(i, j) * root[j];

    std::vector<double> ev = symmetric_eigenvalues(s);  // descending
    const double top = ev.front();
    if (!(top > 0.0)) throw DomainError("Sigma not PSD: no positive eigenvalue");
    ev.pop_back();  // structural zero of the centering form
    std::vector<double> kept;
    for (double v : ev) {
        if (v < -1e-9 * top) throw DomainError("Sigma not PSD: negative eigenvalue");
        if (v > 1e-9 * top) kept.push_back(v);
    }
    std::sort(kept.begin(), kept.end());

    WeightedChi2 law;
    for (std::size_t i = 0; i < kept.size();) {
        std::size_t j = i;
        double total = 0.0;
        while (j < kept.size() && kept[j] - kept[i] <= opts.merge_rel * kept[j]) total += kept[j++];
        law.lambda.push_back(total / static_cast<double>(j - i));
        law.multiplicity.push_back(static_cast<int>(j - i));
        i = j;
    }
    return law;
}

double QDistribution::upper_tail(double x) const {
    if (std::isnan(x)) throw DomainError("upper_tail: NaN argument");
    return std::visit(
        [x](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, WeightedChi2>) {
                if (x <= 0.0) return 1.0;
                return clamp01(1.0 - weighted_chi2_cdf(p, x));
            } else if constexpr (std::is_same_v<T, ScaledChi2>) {
                return chi2_sf(x / p.c, p.p);
            } else if constexpr (std::is_same_v<T, PowerChi2>) {
                if (x <= 0.0) return 1.0;
                return chi2_sf(std::pow(x / p.c, 1.0 / p.r), p.p);
            } else if constexpr (std::is_same_v<T, Chi2>) {
                return chi2_sf(x, p.df);
            } else {
                return f_sf(x / p.scale, p.df1, p.df2);
            }
        },
        params_);
}

std::vector<double> QDistribution::upper_tail(std::span<const double> xs) const {
    std::vector<double> out;
    out.reserve(xs.size());
    for (double x : xs) out.push_back(upper_tail(x));
    return out;
}

QDistribution exact_weighted_chi2(const ModelState& state, const WeightScheme& scheme) {
    if (state.K() != scheme.size()) throw DomainError("model/weights length mismatch");
    std::vector<double> sigma(state.cond_vars().begin(), state.cond_vars().end());
    for (double& v : sigma) v += state.tau2();
    return QDistribution(Method::FarebrotherSW, quadratic_form_law(sigma, scheme));
}

QDistribution m2_approx(const QMoments& qm) {
    if (!(qm.mean > 0.0) || !(qm.raw2 > qm.mean * qm.mean)) throw DomainError("degenerate moments");
    const double p = 2.0 / (qm.raw2 / (qm.mean * qm.mean) - 1.0);
    return QDistribution(Method::M2SW, ScaledChi2{qm.mean / p, p});
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// log of the normalized moment ratios A = mu2/mu1^2, B = mu3/mu1^3 of c (chi2_p)^r
Planar log_moment_ratios(double r, double p) {
    const double h = 0.5 * p;
    if (!(r > 0.0) || !(p > 0.0)) return {kNaN, kNaN};
    const double l1 = ln_gamma(r + h);
    const double l0 = ln_gamma(h);
    return {ln_gamma(2.0 * r + h) + l0 - 2.0 * l1, ln_gamma(3.0 * r + h) + 2.0 * l0 - 3.0 * l1};
}

}  // namespace

QDistribution m3_approx(const QMoments& qm) {
    if (!(qm.mean > 0.0) || !(qm.raw2 > qm.mean * qm.mean) || !(qm.raw3 > 0.0))
        throw M3Breakdown("M3 breakdown: degenerate moments");
    const double log_a = std::log(qm.raw2) - 2.0 * std::log(qm.mean);
    const double log_b = std::log(qm.raw3) - 3.0 * std::log(qm.mean);
    // E X^3 E X >= (E X^2)^2 for any nonnegative X
    if (!(log_b >= 2.0 * log_a - 1e-12)) throw M3Breakdown("M3 breakdown: moments inadmissible for a positive law");

    const double p_start = 2.0 / (std::exp(log_a) - 1.0);
    const auto residual = [&](const Planar& rp) -> Planar {
        const Planar lr = log_moment_ratios(rp[0], rp[1]);
        return {lr[0] - log_a, lr[1] - log_b};
    };
    const PlanarSolve sol = newton_2d(residual, {1.0, p_start}, 1e-10);
    const double r = sol.root[0], p = sol.root[1];
    if (!sol.converged) throw M3Breakdown("M3 breakdown: " + sol.message);
    if (!(r > 0.0) || !(p > 0.0) || !std::isfinite(r) || !std::isfinite(p))
        throw M3Breakdown("M3 breakdown: nonpositive shape");
    const double log_c = std::log(qm.raw2) + ln_gamma(r + 0.5 * p) - r * std::numbers::ln2 - std::log(qm.mean) -
                         ln_gamma(2.0 * r + 0.5 * p);
    const double c = std::exp(log_c);
    if (!(c > 0.0) || !std::isfinite(c)) throw M3Breakdown("M3 breakdown: invalid scale");
    return QDistribution(Method::M3SW, PowerChi2{c, p, r});
}

QDistribution chi2_iv(std::size_t K) {
    if (K < 2) throw DomainError("chi2_iv needs at least two studies");
    return QDistribution(Method::ChiSquareIV, Chi2{static_cast<double>(K - 1)});
}

double satterthwaite_df(const StudySummary& s) {
    const double nt = s.n_treat, nc = s.n_ctrl;
    const double v = s.cond_var();
    const double denom = s.var_treat * s.var_treat / (nt * nt * (nt - 1.0)) +
                         s.var_ctrl * s.var_ctrl / (nc * nc * (nc - 1.0));
    return v * v / denom;
}

QDistribution welch_iv(std::span<const StudySummary> studies) {
    const std::size_t k = studies.size();
    if (k < 2) throw DomainError("welch_iv needs at least two studies");
    const WeightScheme iv = inverse_variance_weights(studies, 0.0);
    const auto q = iv.normalized();
    double lambda = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double f = satterthwaite_df(studies[i]);
        if (!(f > 0.0) || !std::isfinite(f)) throw DomainError("welch_iv: per-study degrees of freedom must be positive");
        lambda += (1.0 - q[i]) * (1.0 - q[i]) / f;
    }
    const double kk = static_cast<double>(k);
    const double df1 = kk - 1.0;
    const double scale = df1 * (1.0 + 2.0 * (kk - 2.0) * lambda / (kk * kk - 1.0));
    const double df2 = (kk * kk - 1.0) / (3.0 * lambda);
    return QDistribution(Method::WelchIV, ScaledF{scale, df1, df2});
}

QDistribution bj_iv(std::span<const StudySummary> studies, double tau2) {
    if (studies.size() < 2) throw DomainError("bj_iv needs at least two studies");
    if (!(tau2 >= 0.0)) throw DomainError("tau2 must be nonnegative");
    const WeightScheme iv = inverse_variance_weights(studies, 0.0);
    std::vector<double> sigma = cond_vars_of(studies);
    for (double& v : sigma) v += tau2;
    return QDistribution(Method::BJIV, quadratic_form_law(sigma, iv));
}

namespace {

bool uses_constant_weights(Method m) {
    return m == Method::FarebrotherSW || m == Method::M2SW || m == Method::M3SW;
}

}  // namespace

QDistribution method_law(Method m, std::span<const StudySummary> studies, const WeightScheme& constant,
                         double tau2) {
    if (studies.size() != constant.size()) throw DomainError("studies/weights length mismatch");
    switch (m) {
        case Method::FarebrotherSW:
            return exact_weighted_chi2(ModelState(tau2, cond_vars_of(studies)), constant);
        case Method::M2SW:
        case Method::M3SW: {
            const QMoments qm = q_moments(md_unconditional_moments(ModelState(tau2, cond_vars_of(studies))), constant);
            return m == Method::M2SW ? m2_approx(qm) : m3_approx(qm);
        }
        case Method::ChiSquareIV: return chi2_iv(studies.size());
        case Method::WelchIV: return welch_iv(studies);
        case Method::BJIV: return bj_iv(studies, tau2);
    }
    throw DomainError("unknown method");
}

double method_statistic(Method m, std::span<const StudySummary> studies, const WeightScheme& constant) {
    const std::vector<double> effects = effects_of(studies);
    if (uses_constant_weights(m)) return q_statistic(effects, constant);
    return q_statistic(effects, inverse_variance_weights(studies, 0.0));
}

double method_upper_tail(Method m, std::span<const StudySummary> studies, const WeightScheme& constant,
                         double tau2) {
    return method_law(m, studies, constant, tau2).upper_tail(method_statistic(m, studies, constant));
}

}  // namespace qsw
