// Test-only reference optimizers and numeric checks. These deliberately share
// no code with the solvers they certify.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dmar/matrix.hpp"
#include "dmar/rng.hpp"

namespace oracle {

// value and smooth-part gradient of a penalized objective at beta
using ValueGrad =
    std::function<double(const std::vector<double>&, std::vector<double>* grad)>;

// Projected subgradient descent on smooth(beta) + lambda*||beta||_1 with a
// diminishing step, returning the best objective seen. Slow but independent;
// its result upper-bounds the optimum.
inline double subgradient_descent(std::size_t d, const ValueGrad& smooth, double lambda,
                                  std::size_t iters) {
  std::vector<double> beta(d, 0.0), grad(d), sub(d);
  auto objective = [&](const std::vector<double>& b) {
    double v = smooth(b, nullptr);
    for (double x : b) v += lambda * std::abs(x);
    return v;
  };
  double best = objective(beta);
  smooth(beta, &grad);
  double g0 = 0.0;
  for (double g : grad) g0 += g * g;
  const double step_scale = 0.5 / (1.0 + std::sqrt(g0));
  for (std::size_t k = 0; k < iters; ++k) {
    smooth(beta, &grad);
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      if (beta[j] > 0.0)
        s = 1.0;
      else if (beta[j] < 0.0)
        s = -1.0;
      sub[j] = grad[j] + lambda * s;
    }
    const double step = step_scale / std::sqrt(static_cast<double>(k + 1));
    for (std::size_t j = 0; j < d; ++j) beta[j] -= step * sub[j];
    const double v = objective(beta);
    if (v < best) best = v;
  }
  return best;
}

// max relative deviation between an analytic gradient and central finite
// differences of the smooth part
inline double gradient_fd_error(std::size_t d, const ValueGrad& smooth,
                                const std::vector<double>& at, double h = 1e-5) {
  std::vector<double> grad(d);
  smooth(at, &grad);
  double scale = 1.0;
  for (double g : grad) scale = std::max(scale, std::abs(g));
  double worst = 0.0;
  std::vector<double> p = at;
  for (std::size_t j = 0; j < d; ++j) {
    p[j] = at[j] + h;
    const double up = smooth(p, nullptr);
    p[j] = at[j] - h;
    const double dn = smooth(p, nullptr);
    p[j] = at[j];
    const double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[j]) / scale);
  }
  return worst;
}

// dense symmetric solve by Gaussian elimination with partial pivoting
inline std::vector<double> solve_linear(std::vector<std::vector<double>> a,
                                        std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
    std::swap(a[k], a[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a[k][j] * x[j];
    x[k] = s / a[k][k];
  }
  return x;
}

// weighted least squares (X'WX)^{-1} X'Wy computed directly
inline std::vector<double> wls_closed_form(const dmar::DesignMatrix& x,
                                           const std::vector<double>& y,
                                           const std::vector<double>& w) {
  const std::size_t m = x.n_rows, d = x.n_cols;
  std::vector<std::vector<double>> xtx(d, std::vector<double>(d, 0.0));
  std::vector<double> xty(d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      xty[j] += w[i] * x.at(i, j) * y[i];
      for (std::size_t k = 0; k < d; ++k) xtx[j][k] += w[i] * x.at(i, j) * x.at(i, k);
    }
  }
  return solve_linear(std::move(xtx), std::move(xty));
}

inline dmar::DesignMatrix random_design(std::size_t m, std::size_t d, dmar::Rng& rng,
                                        bool intercept = true) {
  dmar::DesignMatrix x(m, d);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j)
      x.at(i, j) = (intercept && j == 0) ? 1.0 : rng.normal();
  return x;
}

}  // namespace oracle
