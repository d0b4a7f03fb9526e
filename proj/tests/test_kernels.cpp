#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "qsw/kernels.hpp"

using namespace qsw::kernels;

namespace {

struct Inputs {
    std::vector<double> a, b, w, base, coef, pow;
};

Inputs make_inputs(std::size_t n, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(-2.0, 2.0), pos(0.1, 3.0), frac(0.0, 0.999);
    Inputs in;
    for (std::size_t i = 0; i < n; ++i) {
        in.a.push_back(u(gen));
        in.b.push_back(u(gen));
        in.w.push_back(pos(gen));
        in.base.push_back(frac(gen));
        in.coef.push_back(pos(gen));
        in.pow.push_back(pos(gen));
    }
    return in;
}

bool close(double x, double y) { return std::abs(x - y) <= 1e-12 * std::max(1.0, std::abs(y)); }

}  // namespace

TEST_CASE("scalar table is always available and listed first") {
    const auto tables = available();
    REQUIRE_FALSE(tables.empty());
    CHECK(tables.front()->isa == Isa::Scalar);
    CHECK(isa_name(Isa::Scalar) == "scalar");
}

TEST_CASE("every available variant matches the scalar kernels") {
    const Table& ref = scalar_table();
    std::mt19937_64 gen(7);
    for (const Table* t : available()) {
        CAPTURE(t->name);
        for (std::size_t n = 0; n <= 67; ++n) {
            CAPTURE(n);
            Inputs in = make_inputs(n, gen);
            CHECK(close(t->dot(in.a.data(), in.b.data(), n), ref.dot(in.a.data(), in.b.data(), n)));
            CHECK(close(t->weighted_sq_dev(in.w.data(), in.a.data(), 0.3, n),
                        ref.weighted_sq_dev(in.w.data(), in.a.data(), 0.3, n)));
            CHECK(close(t->sum_squares(in.a.data(), n), ref.sum_squares(in.a.data(), n)));

            std::vector<double> p1 = in.pow, p2 = in.pow;
            for (int step = 0; step < 5; ++step) {
                const double s1 = t->advance_powers(p1.data(), in.base.data(), in.coef.data(), n);
                const double s2 = ref.advance_powers(p2.data(), in.base.data(), in.coef.data(), n);
                CHECK(close(s1, s2));
            }
            for (std::size_t i = 0; i < n; ++i) CHECK(close(p1[i], p2[i]));
        }
    }
}

TEST_CASE("scalar kernels against direct loops") {
    const std::vector<double> a = {1.0, 2.0, 3.0}, b = {4.0, -5.0, 6.0}, w = {1.0, 2.0, 0.5};
    const Table& s = scalar_table();
    CHECK(s.dot(a.data(), b.data(), 3) == doctest::Approx(12.0));
    // 1*(1-2)^2 + 2*(2-2)^2 + 0.5*(3-2)^2
    CHECK(s.weighted_sq_dev(w.data(), a.data(), 2.0, 3) == doctest::Approx(1.5));
    CHECK(s.sum_squares(b.data(), 3) == doctest::Approx(77.0));
    std::vector<double> pow = {1.0, 1.0, 1.0};
    const std::vector<double> base = {0.5, 0.25, 2.0}, coef = {1.0, 4.0, 1.0};
    CHECK(s.advance_powers(pow.data(), base.data(), coef.data(), 3) == doctest::Approx(0.5 + 1.0 + 2.0));
    CHECK(pow[2] == 2.0);
}

TEST_CASE("span wrappers use the active table") {
    const std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0};
    CHECK(sum_squares(a) == doctest::Approx(55.0));
    CHECK(dot(a, a) == doctest::Approx(55.0));
    CHECK(std::string_view(active().name) == isa_name(active().isa));
}
