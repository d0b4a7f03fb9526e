#pragma once

// Slow, independent reference computations shared by the unit and
// acceptance tests. None of these call the library code they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace oracle {

/// E[prod_k X_{idx_k}] for independent centered X_i with central moments
/// m[r][i] (r = 2..6).
inline double centered_product(const std::vector<std::size_t>& idx, const std::vector<std::vector<double>>& m) {
    std::vector<std::size_t> seen;
    double out = 1.0;
    std::vector<bool> done(idx.size(), false);
    for (std::size_t a = 0; a < idx.size(); ++a) {
        if (done[a]) continue;
        int count = 0;
        for (std::size_t b = a; b < idx.size(); ++b)
            if (idx[b] == idx[a]) {
                ++count;
                done[b] = true;
            }
        if (count == 1) return 0.0;
        out *= m[static_cast<std::size_t>(count)][idx[a]];
    }
    return out;
}

/// E(Q), E(Q^2), E(Q^3) for Q = x' A x with A = W (diag q - q q') by full index
/// expansion; cost K^6 for the third moment.
struct RawMoments {
    double e1, e2, e3;
};

inline RawMoments expanded_q_moments(const std::vector<double>& w, const std::vector<std::vector<double>>& m) {
    const std::size_t K = w.size();
    double W = 0.0;
    for (double x : w) W += x;
    std::vector<std::vector<double>> A(K, std::vector<double>(K));
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j) A[i][j] = (i == j ? w[i] : 0.0) - w[i] * w[j] / W;

    RawMoments r{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j) r.e1 += A[i][j] * centered_product({i, j}, m);
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j)
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t l = 0; l < K; ++l) r.e2 += A[i][j] * A[k][l] * centered_product({i, j, k, l}, m);
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j)
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t l = 0; l < K; ++l) {
                    const double a = A[i][j] * A[k][l];
                    for (std::size_t s = 0; s < K; ++s)
                        for (std::size_t t = 0; t < K; ++t)
                            r.e3 += a * A[s][t] * centered_product({i, j, k, l, s, t}, m);
                }
    return r;
}

/// Normal central moments for variances s2: (0, 0, s2, 0, 3 s2^2, 0, 15 s2^3).
inline std::vector<std::vector<double>> normal_moment_table(const std::vector<double>& s2) {
    std::vector<std::vector<double>> m(7, std::vector<double>(s2.size(), 0.0));
    for (std::size_t i = 0; i < s2.size(); ++i) {
        m[2][i] = s2[i];
        m[4][i] = 3.0 * s2[i] * s2[i];
        m[6][i] = 15.0 * s2[i] * s2[i] * s2[i];
    }
    return m;
}

/// Number of eigenvalues of symmetric `a` below x (Sylvester inertia of a - xI).
inline int eigen_count_below(std::vector<std::vector<double>> a, double x) {
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) a[i][i] -= x;
    int negative = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double pivot = a[k][k];
        if (pivot == 0.0) pivot = 1e-300;
        if (pivot < 0.0) ++negative;
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a[i][k] / pivot;
            for (std::size_t j = k + 1; j < n; ++j) a[i][j] -= f * a[k][j];
        }
    }
    return negative;
}

/// Eigenvalues ascending by bisection on the inertia count.
inline std::vector<double> bisection_eigenvalues(const std::vector<std::vector<double>>& a) {
    const std::size_t n = a.size();
    double bound = 0.0;
    for (const auto& row : a) {
        double s = 0.0;
        for (double v : row) s += std::abs(v);
        bound = std::max(bound, s);
    }
    std::vector<double> out;
    for (std::size_t k = 0; k < n; ++k) {
        double lo = -bound - 1.0, hi = bound + 1.0;
        for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, bound); ++it) {
            const double mid = 0.5 * (lo + hi);
            if (eigen_count_below(a, mid) > static_cast<int>(k))
                hi = mid;
            else
                lo = mid;
        }
        out.push_back(0.5 * (lo + hi));
    }
    return out;
}

/// P(sum lambda_r chi2_{h_r} > x) by Imhof's inversion integral, composite
/// Simpson on [0, U]. U bounds the neglected tail by ~1e-8 and the step
/// resolves the oscillation of sin(theta(u)), whose rate is at most x / 2.
inline double imhof_upper_tail(const std::vector<double>& lambda, const std::vector<int>& h, double x,
                               int min_intervals = 400000) {
    double lmin = lambda[0];
    int H = 0;
    for (std::size_t r = 0; r < lambda.size(); ++r) {
        lmin = std::min(lmin, lambda[r]);
        H += h[r];
    }
    auto rho_log = [&](double u) {
        double s = 0.0;
        for (std::size_t r = 0; r < lambda.size(); ++r) s += 0.25 * h[r] * std::log1p(lambda[r] * lambda[r] * u * u);
        return s;
    };
    auto integrand = [&](double u) {
        if (u == 0.0) {
            double s = -0.5 * x;
            for (std::size_t r = 0; r < lambda.size(); ++r) s += 0.5 * h[r] * lambda[r];
            return s;
        }
        double theta = -0.5 * x * u;
        for (std::size_t r = 0; r < lambda.size(); ++r) theta += 0.5 * h[r] * std::atan(lambda[r] * u);
        return std::sin(theta) / (u * std::exp(rho_log(u)));
    };
    // |integrand| <= 1 / (u rho(u)) and rho grows like u^{H/2}.
    double U = 1.0 / lmin;
    while (std::exp(rho_log(U)) * (0.5 * H) * std::numbers::pi < 1e8) U *= 1.5;
    double rate = 0.5 * x;
    for (std::size_t r = 0; r < lambda.size(); ++r) rate += 0.5 * h[r] * lambda[r];
    long intervals = std::max<long>(min_intervals, static_cast<long>(U * rate * 40.0));
    intervals += intervals % 2;
    const double hstep = U / static_cast<double>(intervals);
    double s = integrand(0.0) + integrand(U);
    for (long i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * integrand(static_cast<double>(i) * hstep);
    return 0.5 + s * hstep / 3.0 / std::numbers::pi;
}

/// Composite Simpson for smooth integrands on [a, b].
template <class F>
double simpson(F f, double a, double b, int intervals = 20000) {
    const double h = (b - a) / intervals;
    double s = f(a) + f(b);
    for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

}  // namespace oracle
