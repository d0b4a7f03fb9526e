#pragma once

// Special functions, a dense symmetric eigensolver and scalar/2-D solvers.
// Everything here is self-contained; tolerances default to 1e-10.

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace qsw {

/// Dense row-major square matrix, symmetric by contract.
class SymmetricMatrix {
  public:
    explicit SymmetricMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

    std::size_t size() const noexcept { return n_; }
    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }
    double trace() const noexcept;
    double frobenius_sq() const noexcept;

  private:
    std::size_t n_;
    std::vector<double> data_;
};

template <class Root>
struct SolveReport {
    Root root{};
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::string message;
};

using ScalarSolve = SolveReport<double>;
using PlanarSolve = SolveReport<std::array<double, 2>>;

// --- special functions ---------------------------------------------------

/// log Gamma(x) for x > 0 (Lanczos, g = 607/128).
double ln_gamma(double x);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed directly.
double gamma_q(double a, double x);

/// P(chi2_df <= x). Non-integer df is allowed; x < 0 gives 0.
double chi2_cdf(double x, double df);
/// P(chi2_df > x), without cancellation in the upper tail.
double chi2_sf(double x, double df);

/// Regularized incomplete beta I_x(a, b).
double beta_inc(double a, double b, double x);

double f_cdf(double x, double df1, double df2);
double f_sf(double x, double df1, double df2);

double normal_cdf(double x);
/// Inverse of the standard normal CDF on (0, 1) (Wichura AS 241, ~1e-16).
double normal_quantile(double p);

// --- linear algebra --------------------------------------------------------

/// All eigenvalues of a symmetric matrix, descending (Householder
/// tridiagonalization followed by implicit QL). Throws on asymmetric input.
std::vector<double> symmetric_eigenvalues(const SymmetricMatrix& a);

// --- solvers -------------------------------------------------------------

/// Brent's method on a sign-changing bracket [lo, hi]. At most 200 iterations.
ScalarSolve brent_root(const std::function<double(double)>& f, double lo, double hi,
                       double tol = 1e-10);

using Planar = std::array<double, 2>;

/// Damped Newton for F: R^2 -> R^2 with a central-difference Jacobian.
/// Stops when ||F||_inf <= tol; halves the step (up to 30 times) whenever
/// the residual norm does not decrease. Non-finite residuals count as an
/// increase, so F may return NaN outside its domain.
PlanarSolve newton_2d(const std::function<Planar(const Planar&)>& f, Planar start,
                      double tol = 1e-10, int max_iter = 100);

}  // namespace qsw
