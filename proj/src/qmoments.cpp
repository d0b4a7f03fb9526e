#include "qsw/qmoments.hpp"

#include <string>

#include "qsw/error.hpp"

namespace qsw {

namespace {

void check_lengths(const UnconditionalMoments& m, const WeightScheme& scheme, bool need_odd_and_six) {
    const std::size_t k = scheme.size();
    if (m.m2.size() != k || m.m4.size() != k) throw DomainError("moments/weights length mismatch");
    if (need_odd_and_six && (m.m3.size() != k || m.m6.size() != k))
        throw DomainError("moments/weights length mismatch");
}

// E[(theta_i - theta)^r] for theta_i ~ N(theta, tau2)
double normal_central_moment(int r, double tau2) {
    if (r % 2 == 1) return 0.0;
    double double_factorial = 1.0;
    for (int k = r - 1; k > 1; k -= 2) double_factorial *= k;
    double power = 1.0;
    for (int k = 0; k < r / 2; ++k) power *= tau2;
    return double_factorial * power;
}

constexpr double binomial(int n, int k) {
    double out = 1.0;
    for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
    return out;
}

}  // namespace

QMoments QMoments::from_raw(double mean, double raw2, double raw3) {
    QMoments out;
    out.mean = mean;
    out.raw2 = raw2;
    out.raw3 = raw3;
    out.variance = raw2 - mean * mean;
    out.central3 = raw3 - 3.0 * mean * raw2 + 2.0 * mean * mean * mean;
    return out;
}

UnconditionalMoments md_unconditional_moments(const ModelState& state) {
    const double t = state.tau2();
    UnconditionalMoments out;
    const std::size_t k = state.K();
    out.m2.reserve(k);
    out.m4.reserve(k);
    out.m6.reserve(k);
    for (double v : state.cond_vars()) {
        out.m2.push_back(v + t);
        out.m4.push_back(3.0 * v * v + 6.0 * v * t + 3.0 * t * t);
        out.m6.push_back(15.0 * v * v * v + 45.0 * v * v * t + 45.0 * v * t * t + 15.0 * t * t * t);
    }
    out.m3.assign(k, 0.0);
    out.m5.assign(k, 0.0);
    return out;
}

void ConditionalMomentTable::set(int r, int j, double value) {
    if (r < 2 || r > 6 || j < 2 || j > r) throw DomainError("conditional moment entry outside 2 <= j <= r <= 6");
    entries_[static_cast<std::size_t>(r * 7 + j)] = value;
}

std::optional<double> ConditionalMomentTable::get(int r, int j) const {
    if (r < 0 || r > 6 || j < 0 || j > r) return std::nullopt;
    return entries_[static_cast<std::size_t>(r * 7 + j)];
}

UnconditionalMoments general_unconditional_moments(std::span<const ConditionalMomentTable> studies,
                                                   double tau2) {
    if (!(tau2 >= 0.0)) throw DomainError("tau2 must be nonnegative");
    UnconditionalMoments out;
    std::array<std::vector<double>*, 7> slots{nullptr, nullptr, &out.m2, &out.m3, &out.m4, &out.m5, &out.m6};
    for (std::size_t i = 0; i < studies.size(); ++i) {
        for (int r = 2; r <= 6; ++r) {
            double total = normal_central_moment(r, tau2);  // j = 0
            for (int j = 2; j <= r; ++j) {
                const auto entry = studies[i].get(r, j);
                if (!entry)
                    throw DomainError("conditional moment table for study " + std::to_string(i) +
                                      " is missing entry (r=" + std::to_string(r) + ", j=" + std::to_string(j) + ")");
                total += binomial(r, j) * *entry;
            }
            slots[r]->push_back(total);
        }
    }
    return out;
}

double q_mean(const UnconditionalMoments& m, const WeightScheme& scheme) {
    if (m.m2.size() != scheme.size()) throw DomainError("moments/weights length mismatch");
    const auto q = scheme.normalized();
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * (1.0 - q[i]) * m.m2[i];
    return scheme.total() * s;
}

double q_variance(const UnconditionalMoments& m, const WeightScheme& scheme) {
    check_lengths(m, scheme, false);
    const auto q = scheme.normalized();
    double diag = 0.0;
    double s_q2m2 = 0.0;   // sum q^2 M2
    double s_q4m22 = 0.0;  // sum q^4 M2^2
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double a = q[i] * (1.0 - q[i]);
        const double y = q[i] * q[i] * m.m2[i];
        diag += a * a * (m.m4[i] - m.m2[i] * m.m2[i]);
        s_q2m2 += y;
        s_q4m22 += y * y;
    }
    const double off = 2.0 * (s_q2m2 * s_q2m2 - s_q4m22);
    const double w = scheme.total();
    return w * w * (diag + off);
}

double q_third_raw_moment(const UnconditionalMoments& m, const WeightScheme& scheme) {
    check_lengths(m, scheme, true);
    const auto q = scheme.normalized();

    // Per-study factors of the eight groups:
    //   a = q(1-q), b = a M2, y = q^2 M2, x = q^2(1-q) M3, u = q^3(1-q) M4, z = q^3 M3.
    double t1 = 0.0, s_b = 0.0, s_a2c = 0.0;
    double s_x = 0.0, s_x2 = 0.0;
    double s_u = 0.0, s_uy = 0.0;
    double s_y = 0.0, s_y2 = 0.0, s_y3 = 0.0;
    double s_by = 0.0, s_by2 = 0.0;
    double s_z = 0.0, s_z2 = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double qi = q[i];
        const double a = qi * (1.0 - qi);
        const double m2 = m.m2[i], m3 = m.m3[i], m4 = m.m4[i], m6 = m.m6[i];
        const double b = a * m2;
        const double y = qi * qi * m2;
        const double x = qi * qi * (1.0 - qi) * m3;
        const double u = qi * qi * qi * (1.0 - qi) * m4;
        const double z = qi * qi * qi * m3;

        t1 += a * a * a * (m6 - 3.0 * m4 * m2 + 2.0 * m2 * m2 * m2);
        s_b += b;
        s_a2c += a * a * (m4 - m2 * m2);
        s_x += x;
        s_x2 += x * x;
        s_u += u;
        s_uy += u * y;
        s_y += y;
        s_y2 += y * y;
        s_y3 += y * y * y;
        s_by += b * y;
        s_by2 += b * y * y;
        s_z += z;
        s_z2 += z * z;
    }

    const double t2 = 3.0 * s_b * s_a2c;
    const double t3 = s_b * s_b * s_b;
    // sum_{i != j} x_i x_j = (sum x)^2 - sum x^2
    const double t4 = -6.0 * (s_x * s_x - s_x2);
    // sum_{i != j} u_i y_j = sum u sum y - sum u y
    const double t5 = 12.0 * (s_u * s_y - s_uy);
    // sum over distinct (i, j, k) of b_i y_j y_k
    const double t6 = 6.0 * (s_b * (s_y * s_y - s_y2) - 2.0 * s_y * s_by + 2.0 * s_by2);
    const double t7 = -4.0 * (s_z * s_z - s_z2);
    // sum over distinct (i, j, k) of y_i y_j y_k
    const double t8 = -8.0 * (s_y * s_y * s_y - 3.0 * s_y * s_y2 + 2.0 * s_y3);

    const double w = scheme.total();
    return w * w * w * (t1 + t2 + t3 + t4 + t5 + t6 + t7 + t8);
}

QMoments q_moments(const UnconditionalMoments& m, const WeightScheme& scheme) {
    const double mean = q_mean(m, scheme);
    const double var = q_variance(m, scheme);
    const double raw3 = q_third_raw_moment(m, scheme);
    QMoments out;
    out.mean = mean;
    out.variance = var;
    out.raw2 = var + mean * mean;
    out.raw3 = raw3;
    out.central3 = raw3 - 3.0 * mean * out.raw2 + 2.0 * mean * mean * mean;
    return out;
}

}  // namespace qsw
