#include "dmar/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "dmar/errors.hpp"
#include "dmar/kernels.hpp"
#include "dmar/rng.hpp"

namespace dmar::solvers {

namespace {

using kernels::ops;

constexpr double kExpClamp = 40.0;

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

inline double l1_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

inline double penalty_norm(std::span<const double> v, bool penalize_intercept) {
  double s = penalize_intercept || v.empty() ? 0.0 : -std::abs(v[0]);
  for (double x : v) s += std::abs(x);
  return s;
}

inline double coord_lambda(double lambda, std::size_t j, bool penalize_intercept) {
  return (j == 0 && !penalize_intercept) ? 0.0 : lambda;
}

double kkt_residual_pattern(std::span<const double> grad, std::span<const double> coef,
                            double lambda, bool penalize_intercept) {
  double worst = 0.0;
  for (std::size_t j = 0; j < coef.size(); ++j) {
    const double lj = coord_lambda(lambda, j, penalize_intercept);
    double viol;
    if (coef[j] > 0.0)
      viol = std::abs(grad[j] + lj);
    else if (coef[j] < 0.0)
      viol = std::abs(grad[j] - lj);
    else
      viol = std::max(0.0, std::abs(grad[j]) - lj);
    worst = std::max(worst, viol);
  }
  return worst;
}

inline double log1pexp(double u) {
  if (u > 36.0) return u;
  if (u < -36.0) return std::exp(u);
  return std::log1p(std::exp(u));
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw numeric_error(std::string("non-finite ") + what);
}

std::vector<double> start_from(const SolverConfig& cfg, std::size_t d) {
  if (cfg.init.empty()) return std::vector<double>(d, 0.0);
  if (cfg.init.size() != d) throw contract_error("init vector has wrong dimension");
  return cfg.init;
}

DesignMatrix gather_design_rows(const DesignMatrix& x, std::span<const std::size_t> rows) {
  DesignMatrix out(rows.size(), x.n_cols);
  for (std::size_t j = 0; j < x.n_cols; ++j) {
    const double* src = x.col(j);
    double* dst = out.col(j);
    for (std::size_t r = 0; r < rows.size(); ++r) dst[r] = src[rows[r]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// pointwise losses for the proximal solver; values are sums over samples,
// the (1/M) normalization is applied by the caller
// ---------------------------------------------------------------------------

struct LogisticPw {
  std::span<const std::uint8_t> labels;
  std::span<const double> offset;

  double value(std::span<const double> eta_lin, std::vector<double>& tmp) const {
    const std::size_t m = eta_lin.size();
    tmp.resize(m);
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double u = eta_lin[i] + offset[i];
      acc += log1pexp(u) - (labels[i] ? u : 0.0);
    }
    return acc;
  }

  void derivs(std::span<const double> eta_lin, std::span<double> du,
              std::vector<double>& tmp) const {
    const std::size_t m = eta_lin.size();
    tmp.resize(m);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = eta_lin[i] + offset[i];
    ops().vlogistic(tmp.data(), du.data(), m);
    for (std::size_t i = 0; i < m; ++i) du[i] -= labels[i];
  }

  // curvature bound p(1-p) <= 1/4
  double curvature(std::size_t i, std::span<const double>) const {
    (void)i;
    return 0.25;
  }

  long long clamp_count() const { return 0; }
};

struct TbrBetaPw {
  std::span<const std::uint8_t> gamma;
  double inv_gamma_hat = 1.0;
  mutable long long clamps = 0;

  double value(std::span<const double> eta_lin, std::vector<double>& tmp) const {
    const std::size_t m = eta_lin.size();
    tmp.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      double a = -eta_lin[i];
      if (a > kExpClamp) {
        a = kExpClamp;
        if (gamma[i]) ++clamps;
      } else if (a < -kExpClamp) {
        a = -kExpClamp;
        if (gamma[i]) ++clamps;
      }
      tmp[i] = a;
    }
    std::vector<double> e(m);
    ops().vexp(tmp.data(), e.data(), m);
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      acc += gamma[i] ? inv_gamma_hat * e[i] : eta_lin[i];
    return acc;
  }

  void derivs(std::span<const double> eta_lin, std::span<double> du,
              std::vector<double>& tmp) const {
    const std::size_t m = eta_lin.size();
    tmp.resize(m);
    for (std::size_t i = 0; i < m; ++i)
      tmp[i] = -std::clamp(eta_lin[i], -kExpClamp, kExpClamp);
    std::vector<double> e(m);
    ops().vexp(tmp.data(), e.data(), m);
    for (std::size_t i = 0; i < m; ++i) {
      if (gamma[i]) {
        const bool clamped = eta_lin[i] < -kExpClamp || eta_lin[i] > kExpClamp;
        du[i] = clamped ? 0.0 : -inv_gamma_hat * e[i];
      } else {
        du[i] = 1.0;
      }
    }
  }

  double curvature(std::size_t i, std::span<const double> eta_lin) const {
    if (!gamma[i]) return 0.0;
    return inv_gamma_hat * std::exp(-std::clamp(eta_lin[i], -kExpClamp, kExpClamp));
  }

  long long clamp_count() const { return clamps; }
};

// largest eigenvalue of X' diag(curv) X / M by a few power iterations;
// seeds the proximal step size, refined by backtracking afterwards
template <class Pw>
double lipschitz_estimate(const DesignMatrix& x, const Pw& pw, std::span<const double> eta0) {
  const std::size_t m = x.n_rows, d = x.n_cols;
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> u(m), w(d);
  double lam = 0.0;
  for (int it = 0; it < 8; ++it) {
    x.predict(v, u);
    for (std::size_t i = 0; i < m; ++i) u[i] *= pw.curvature(i, eta0);
    for (std::size_t j = 0; j < d; ++j) w[j] = ops().dot(x.col(j), u.data(), m) / double(m);
    lam = std::sqrt(ops().dot(w.data(), w.data(), d));
    if (lam <= 0.0) break;
    for (std::size_t j = 0; j < d; ++j) v[j] = w[j] / lam;
  }
  return lam;
}

template <class Pw>
SolverResult prox_solve(const DesignMatrix& x, const Pw& pw, double lambda,
                        const SolverConfig& cfg) {
  const std::size_t m = x.n_rows, d = x.n_cols;
  const double inv_m = 1.0 / static_cast<double>(m);

  std::vector<double> beta = start_from(cfg, d);
  std::vector<double> eta(m), du(m), grad(d), cand(d), eta_cand(m), tmp;
  x.predict(beta, eta);

  double f = pw.value(eta, tmp) * inv_m;
  double step = 1.0;
  {
    const double lip = lipschitz_estimate(x, pw, eta);
    if (lip > 1e-300) step = 1.0 / lip;
  }
  const double step_floor = 1e-18 * step;

  SolverResult res;
  res.kkt_residual = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  for (; it < cfg.max_iter; ++it) {
    pw.derivs(eta, du, tmp);
    for (std::size_t j = 0; j < d; ++j) grad[j] = ops().dot(x.col(j), du.data(), m) * inv_m;
    res.kkt_residual = kkt_residual_pattern(grad, beta, lambda, cfg.penalize_intercept);
    if (res.kkt_residual <= cfg.tol) {
      res.converged = true;
      break;
    }

    double f_cand = 0.0;
    for (;;) {
      double gdelta = 0.0, sqdelta = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        cand[j] = soft_threshold(beta[j] - step * grad[j],
                                 step * coord_lambda(lambda, j, cfg.penalize_intercept));
        const double dj = cand[j] - beta[j];
        gdelta += grad[j] * dj;
        sqdelta += dj * dj;
      }
      std::memcpy(eta_cand.data(), eta.data(), m * sizeof(double));
      for (std::size_t j = 0; j < d; ++j) {
        const double dj = cand[j] - beta[j];
        if (dj != 0.0) ops().axpy(dj, x.col(j), eta_cand.data(), m);
      }
      f_cand = pw.value(eta_cand, tmp) * inv_m;
      if (f_cand <= f + gdelta + sqdelta / (2.0 * step) + 1e-14 * (1.0 + std::abs(f))) break;
      step *= cfg.step_shrink;
      if (step < step_floor) break;  // cannot make progress at double precision
    }
    beta.swap(cand);
    eta.swap(eta_cand);
    f = f_cand;
    if (cfg.trace)
      cfg.trace->push_back(f + lambda * penalty_norm(beta, cfg.penalize_intercept));
    step *= 1.25;  // let the step recover; backtracking will pull it down again
  }

  res.iterations = it;
  res.coefficients = std::move(beta);
  res.objective = f + lambda * penalty_norm(res.coefficients, cfg.penalize_intercept);
  res.clamp_count = pw.clamp_count();
  return res;
}

}  // namespace

double kkt_residual_l1(std::span<const double> smooth_grad, std::span<const double> coef,
                       double lambda) {
  double worst = 0.0;
  for (std::size_t j = 0; j < coef.size(); ++j) {
    double viol;
    if (coef[j] > 0.0)
      viol = std::abs(smooth_grad[j] + lambda);
    else if (coef[j] < 0.0)
      viol = std::abs(smooth_grad[j] - lambda);
    else
      viol = std::max(0.0, std::abs(smooth_grad[j]) - lambda);
    worst = std::max(worst, viol);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// weighted lasso by cyclic coordinate descent
// ---------------------------------------------------------------------------

SolverResult fit_lasso_ls(const DesignMatrix& x, std::span<const double> y,
                          std::span<const double> w, double lambda, const SolverConfig& cfg) {
  const std::size_t m = x.n_rows, d = x.n_cols;
  if (y.size() != m || w.size() != m) throw contract_error("fit_lasso_ls: dimension mismatch");
  if (lambda < 0.0 || !std::isfinite(lambda)) throw contract_error("fit_lasso_ls: bad lambda");
  check_finite(y, "outcome");
  check_finite(w, "weights");
  check_finite({x.v.data(), x.v.size()}, "design");
  double wsum = 0.0;
  for (double wi : w) {
    if (wi < 0.0) throw contract_error("fit_lasso_ls: negative weight");
    wsum += wi;
  }
  if (wsum <= 0.0) throw data_error("fit_lasso_ls: all weights zero");

  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<double> beta = start_from(cfg, d);

  std::vector<double> diag(d);
  for (std::size_t j = 0; j < d; ++j)
    diag[j] = 2.0 * inv_m * ops().dot3(x.col(j), x.col(j), w.data(), m);

  // residual r = y - X beta
  std::vector<double> r(y.begin(), y.end());
  for (std::size_t j = 0; j < d; ++j)
    if (beta[j] != 0.0) ops().axpy(-beta[j], x.col(j), r.data(), m);

  SolverResult res;
  res.kkt_residual = std::numeric_limits<double>::infinity();
  std::size_t sweep = 0;
  for (; sweep < cfg.max_iter; ++sweep) {
    for (std::size_t j = 0; j < d; ++j) {
      const double lj = coord_lambda(lambda, j, cfg.penalize_intercept);
      if (diag[j] == 0.0) {
        if (lj > 0.0) beta[j] = 0.0;
        continue;
      }
      const double c = 2.0 * inv_m * ops().dot3(x.col(j), r.data(), w.data(), m) +
                       diag[j] * beta[j];
      const double bj = soft_threshold(c, lj) / diag[j];
      if (bj != beta[j]) {
        ops().axpy(beta[j] - bj, x.col(j), r.data(), m);
        beta[j] = bj;
      }
    }
    if (cfg.trace)
      cfg.trace->push_back(inv_m * ops().dot3(r.data(), r.data(), w.data(), m) +
                           lambda * penalty_norm(beta, cfg.penalize_intercept));
    double worst = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double lj = coord_lambda(lambda, j, cfg.penalize_intercept);
      const double gj = -2.0 * inv_m * ops().dot3(x.col(j), r.data(), w.data(), m);
      double viol;
      if (beta[j] > 0.0)
        viol = std::abs(gj + lj);
      else if (beta[j] < 0.0)
        viol = std::abs(gj - lj);
      else
        viol = std::max(0.0, std::abs(gj) - lj);
      worst = std::max(worst, viol);
    }
    res.kkt_residual = worst;
    if (worst <= cfg.tol) {
      res.converged = true;
      ++sweep;
      break;
    }
  }
  res.iterations = sweep;
  res.objective = inv_m * ops().dot3(r.data(), r.data(), w.data(), m) +
                  lambda * penalty_norm(beta, cfg.penalize_intercept);
  res.coefficients = std::move(beta);
  return res;
}

// ---------------------------------------------------------------------------
// offset logistic and tilted fits via proximal gradient
// ---------------------------------------------------------------------------

SolverResult fit_logistic_l1_offset(const DesignMatrix& x, std::span<const std::uint8_t> labels,
                                    std::span<const double> offset, double lambda,
                                    const SolverConfig& cfg) {
  const std::size_t m = x.n_rows;
  if (labels.size() != m || offset.size() != m)
    throw contract_error("fit_logistic_l1_offset: dimension mismatch");
  if (lambda < 0.0 || !std::isfinite(lambda))
    throw contract_error("fit_logistic_l1_offset: bad lambda");
  check_finite(offset, "offset");
  check_finite({x.v.data(), x.v.size()}, "design");
  for (std::uint8_t g : labels)
    if (g != 0 && g != 1) throw contract_error("labels must be 0/1");

  LogisticPw pw{labels, offset};
  return prox_solve(x, pw, lambda, cfg);
}

SolverResult fit_tbr_beta(const DesignMatrix& x, std::span<const std::uint8_t> gamma,
                          double gamma_hat, double lambda, const SolverConfig& cfg) {
  const std::size_t m = x.n_rows;
  if (gamma.size() != m) throw contract_error("fit_tbr_beta: dimension mismatch");
  if (!(gamma_hat > 0.0 && gamma_hat < 1.0))
    throw contract_error("fit_tbr_beta: gamma_hat must lie in (0,1)");
  if (lambda < 0.0 || !std::isfinite(lambda)) throw contract_error("fit_tbr_beta: bad lambda");
  check_finite({x.v.data(), x.v.size()}, "design");
  std::size_t ones = 0;
  for (std::uint8_t g : gamma) ones += g;
  if (ones == 0) throw data_error("fit_tbr_beta: no labeled samples");
  if (ones == m) throw data_error("fit_tbr_beta: no unlabeled samples");

  TbrBetaPw pw{gamma, 1.0 / gamma_hat};
  return prox_solve(x, pw, lambda, cfg);
}

SolverResult fit_tbr_alpha(const DesignMatrix& x, std::span<const std::uint8_t> gamma,
                           std::span<const double> y, double gamma_hat,
                           std::span<const double> beta_hat, double lambda,
                           const SolverConfig& cfg) {
  const std::size_t m = x.n_rows;
  if (gamma.size() != m || y.size() != m || beta_hat.size() != x.n_cols)
    throw contract_error("fit_tbr_alpha: dimension mismatch");
  if (!(gamma_hat > 0.0 && gamma_hat < 1.0))
    throw contract_error("fit_tbr_alpha: gamma_hat must lie in (0,1)");
  check_finite(beta_hat, "beta_hat");

  std::vector<std::size_t> armed;
  for (std::size_t i = 0; i < m; ++i)
    if (gamma[i]) armed.push_back(i);
  if (armed.empty()) throw data_error("fit_tbr_alpha: all effective weights zero");

  DesignMatrix xa = gather_design_rows(x, armed);
  std::vector<double> ya(armed.size()), wa(armed.size());
  std::vector<double> eta(armed.size());
  xa.predict(beta_hat, eta);
  long long clamps = 0;
  const double scale = static_cast<double>(armed.size()) / static_cast<double>(m);
  for (std::size_t r = 0; r < armed.size(); ++r) {
    ya[r] = y[armed[r]];
    double a = -eta[r];
    if (a > kExpClamp) {
      a = kExpClamp;
      ++clamps;
    } else if (a < -kExpClamp) {
      a = -kExpClamp;
      ++clamps;
    }
    // scale keeps the objective on the full-sample (1/M) normalization
    wa[r] = (1.0 / gamma_hat) * std::exp(a) * scale;
  }
  SolverResult res = fit_lasso_ls(xa, ya, wa, lambda, cfg);
  res.clamp_count = clamps;
  return res;
}

// ---------------------------------------------------------------------------
// public loss / gradient evaluation
// ---------------------------------------------------------------------------

double lasso_objective(const DesignMatrix& x, std::span<const double> y,
                       std::span<const double> w, double lambda, std::span<const double> coef) {
  const std::size_t m = x.n_rows;
  std::vector<double> r(m);
  x.predict(coef, r);
  for (std::size_t i = 0; i < m; ++i) r[i] = y[i] - r[i];
  return ops().dot3(r.data(), r.data(), w.data(), m) / static_cast<double>(m) +
         lambda * l1_norm(coef);
}

void lasso_smooth_gradient(const DesignMatrix& x, std::span<const double> y,
                           std::span<const double> w, std::span<const double> coef,
                           std::span<double> grad) {
  const std::size_t m = x.n_rows;
  std::vector<double> r(m);
  x.predict(coef, r);
  for (std::size_t i = 0; i < m; ++i) r[i] = y[i] - r[i];
  for (std::size_t j = 0; j < x.n_cols; ++j)
    grad[j] = -2.0 * ops().dot3(x.col(j), r.data(), w.data(), m) / static_cast<double>(m);
}

double logistic_offset_loss(const DesignMatrix& x, std::span<const std::uint8_t> labels,
                            std::span<const double> offset, std::span<const double> coef) {
  std::vector<double> eta(x.n_rows), tmp;
  x.predict(coef, eta);
  LogisticPw pw{labels, offset};
  return pw.value(eta, tmp) / static_cast<double>(x.n_rows);
}

void logistic_offset_gradient(const DesignMatrix& x, std::span<const std::uint8_t> labels,
                              std::span<const double> offset, std::span<const double> coef,
                              std::span<double> grad) {
  const std::size_t m = x.n_rows;
  std::vector<double> eta(m), du(m), tmp;
  x.predict(coef, eta);
  LogisticPw pw{labels, offset};
  pw.derivs(eta, du, tmp);
  for (std::size_t j = 0; j < x.n_cols; ++j)
    grad[j] = ops().dot(x.col(j), du.data(), m) / static_cast<double>(m);
}

double tbr_beta_loss(const DesignMatrix& x, std::span<const std::uint8_t> gamma,
                     double gamma_hat, std::span<const double> coef, long long* clamp_count) {
  std::vector<double> eta(x.n_rows), tmp;
  x.predict(coef, eta);
  TbrBetaPw pw{gamma, 1.0 / gamma_hat};
  const double v = pw.value(eta, tmp) / static_cast<double>(x.n_rows);
  if (clamp_count) *clamp_count = pw.clamp_count();
  return v;
}

void tbr_beta_gradient(const DesignMatrix& x, std::span<const std::uint8_t> gamma,
                       double gamma_hat, std::span<const double> coef, std::span<double> grad) {
  const std::size_t m = x.n_rows;
  std::vector<double> eta(m), du(m), tmp;
  x.predict(coef, eta);
  TbrBetaPw pw{gamma, 1.0 / gamma_hat};
  pw.derivs(eta, du, tmp);
  for (std::size_t j = 0; j < x.n_cols; ++j)
    grad[j] = ops().dot(x.col(j), du.data(), m) / static_cast<double>(m);
}

// ---------------------------------------------------------------------------
// lambda selection
// ---------------------------------------------------------------------------

namespace {

std::vector<double> unit_weights(std::size_t m) { return std::vector<double>(m, 1.0); }

// tilted weights (g_i/gamma_hat) exp(-x_i'beta_hat) for the armed rows of a
// slice; zero elsewhere
std::vector<double> tbr_alpha_weights(const DesignMatrix& x, std::span<const std::uint8_t> gamma,
                                      double gamma_hat, std::span<const double> beta_hat) {
  std::vector<double> eta(x.n_rows), w(x.n_rows, 0.0);
  x.predict(beta_hat, eta);
  for (std::size_t i = 0; i < x.n_rows; ++i)
    if (gamma[i])
      w[i] = (1.0 / gamma_hat) * std::exp(-std::clamp(eta[i], -kExpClamp, kExpClamp));
  return w;
}

}  // namespace

double lambda_max_for(const CvProblem& p) {
  const DesignMatrix& x = *p.x;
  const std::size_t m = x.n_rows, d = x.n_cols;
  const double inv_m = 1.0 / static_cast<double>(m);
  const std::size_t j0 = p.penalize_intercept ? 0 : 1;  // free intercept never binds
  double worst = 0.0;
  switch (p.kind) {
    case ProblemKind::lasso_ls: {
      std::vector<double> w = p.w.empty() ? unit_weights(m) : std::vector<double>(p.w.begin(), p.w.end());
      for (std::size_t j = j0; j < d; ++j)
        worst = std::max(worst, std::abs(2.0 * inv_m * ops().dot3(x.col(j), p.y.data(), w.data(), m)));
      break;
    }
    case ProblemKind::tbr_alpha: {
      std::vector<double> w = tbr_alpha_weights(x, p.gamma, p.gamma_hat, p.beta_hat);
      for (std::size_t j = j0; j < d; ++j)
        worst = std::max(worst, std::abs(2.0 * inv_m * ops().dot3(x.col(j), p.y.data(), w.data(), m)));
      break;
    }
    case ProblemKind::logistic_offset: {
      std::vector<double> du(m);
      ops().vlogistic(p.offset.data(), du.data(), m);
      for (std::size_t i = 0; i < m; ++i) du[i] -= p.gamma[i];
      for (std::size_t j = j0; j < d; ++j)
        worst = std::max(worst, std::abs(inv_m * ops().dot(x.col(j), du.data(), m)));
      break;
    }
    case ProblemKind::tbr_beta: {
      std::vector<double> du(m);
      for (std::size_t i = 0; i < m; ++i)
        du[i] = p.gamma[i] ? -1.0 / p.gamma_hat : 1.0;
      for (std::size_t j = j0; j < d; ++j)
        worst = std::max(worst, std::abs(inv_m * ops().dot(x.col(j), du.data(), m)));
      break;
    }
  }
  return worst;
}

std::vector<double> default_lambda_grid(double lambda_max, int points, double ratio) {
  if (!(lambda_max > 0.0) || !std::isfinite(lambda_max)) lambda_max = 1.0;
  std::vector<double> grid(points);
  const double step = std::pow(ratio, 1.0 / (points - 1));
  double v = lambda_max;
  for (int i = 0; i < points; ++i, v *= step) grid[i] = v;
  return grid;
}

namespace {

struct CvSlice {
  DesignMatrix x;
  std::vector<double> y, w, offset;
  std::vector<std::uint8_t> gamma;
};

CvSlice slice_problem(const CvProblem& p, std::span<const std::size_t> rows) {
  CvSlice s;
  s.x = gather_design_rows(*p.x, rows);
  auto take = [&rows](auto& dst, auto src) {
    if (src.empty()) return;
    dst.reserve(rows.size());
    for (std::size_t r : rows) dst.push_back(src[r]);
  };
  take(s.y, p.y);
  take(s.w, p.w);
  take(s.offset, p.offset);
  take(s.gamma, p.gamma);
  return s;
}

SolverResult fit_slice(const CvProblem& p, const CvSlice& s, double lambda,
                       const SolverConfig& cfg) {
  switch (p.kind) {
    case ProblemKind::lasso_ls: {
      if (!s.w.empty()) return fit_lasso_ls(s.x, s.y, s.w, lambda, cfg);
      std::vector<double> w = unit_weights(s.x.n_rows);
      return fit_lasso_ls(s.x, s.y, w, lambda, cfg);
    }
    case ProblemKind::logistic_offset:
      return fit_logistic_l1_offset(s.x, s.gamma, s.offset, lambda, cfg);
    case ProblemKind::tbr_beta:
      return fit_tbr_beta(s.x, s.gamma, p.gamma_hat, lambda, cfg);
    case ProblemKind::tbr_alpha:
      return fit_tbr_alpha(s.x, s.gamma, s.y, p.gamma_hat, p.beta_hat, lambda, cfg);
  }
  throw contract_error("unreachable");
}

double heldout_loss(const CvProblem& p, const CvSlice& s, std::span<const double> coef) {
  const std::size_t m = s.x.n_rows;
  switch (p.kind) {
    case ProblemKind::lasso_ls: {
      std::vector<double> w = s.w.empty() ? unit_weights(m) : s.w;
      return lasso_objective(s.x, s.y, w, 0.0, coef);
    }
    case ProblemKind::tbr_alpha: {
      std::vector<double> w = tbr_alpha_weights(s.x, s.gamma, p.gamma_hat, p.beta_hat);
      return lasso_objective(s.x, s.y, w, 0.0, coef);
    }
    case ProblemKind::logistic_offset:
      return logistic_offset_loss(s.x, s.gamma, s.offset, coef);
    case ProblemKind::tbr_beta:
      return tbr_beta_loss(s.x, s.gamma, p.gamma_hat, coef);
  }
  throw contract_error("unreachable");
}

}  // namespace

CvResult cross_validate_lambda(const CvProblem& p, std::span<const double> grid, int n_cv_folds,
                               std::uint64_t seed, const SolverConfig& cfg) {
  if (grid.empty()) throw contract_error("cross_validate_lambda: empty grid");
  if (n_cv_folds < 2) throw contract_error("cross_validate_lambda: need at least 2 folds");
  const DesignMatrix& x = *p.x;
  const std::size_t m = x.n_rows;
  if (p.gamma.size() != m) throw contract_error("cross_validate_lambda: gamma spans all rows");

  CvResult out;
  out.grid.assign(grid.begin(), grid.end());
  std::sort(out.grid.begin(), out.grid.end(), std::greater<double>());
  out.mean_loss.assign(out.grid.size(), 0.0);

  if (out.grid.size() == 1) {
    out.lambda = out.grid[0];
    out.index = 0;
    return out;
  }

  // folds stratified by gamma so every held-out part sees both classes
  std::vector<std::size_t> ones, zeros;
  for (std::size_t i = 0; i < m; ++i) (p.gamma[i] ? ones : zeros).push_back(i);
  const bool mixed = !ones.empty() && !zeros.empty();
  if (mixed && ones.size() < static_cast<std::size_t>(n_cv_folds))
    throw data_error("cross_validate_lambda: a CV fold would contain no labeled sample");
  Rng rng(derive_seed(seed, 0x6cf));
  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };
  shuffle(ones);
  shuffle(zeros);
  std::vector<int> fold_of(m, 0);
  for (std::size_t k = 0; k < ones.size(); ++k) fold_of[ones[k]] = static_cast<int>(k % n_cv_folds);
  for (std::size_t k = 0; k < zeros.size(); ++k)
    fold_of[zeros[k]] = static_cast<int>(k % n_cv_folds);

  // path fits run at a relaxed tolerance, scaled with lambda so the small
  // end of the grid is still solved to a commensurate accuracy; the caller
  // refits at the chosen lambda with its own config
  SolverConfig path_cfg = cfg;
  path_cfg.max_iter = std::min<std::size_t>(cfg.max_iter, 5000);
  path_cfg.trace = nullptr;

  for (int f = 0; f < n_cv_folds; ++f) {
    std::vector<std::size_t> train, held;
    for (std::size_t i = 0; i < m; ++i) (fold_of[i] == f ? held : train).push_back(i);
    CvSlice tr = slice_problem(p, train);
    CvSlice ho = slice_problem(p, held);
    std::vector<double> warm;  // empty = zero start at the top of the path
    for (std::size_t gi = 0; gi < out.grid.size(); ++gi) {
      SolverConfig c = path_cfg;
      c.tol = std::max(cfg.tol, std::min(1e-5, 1e-2 * out.grid[gi]));
      c.init = warm;
      SolverResult r = fit_slice(p, tr, out.grid[gi], c);
      warm = r.coefficients;
      out.mean_loss[gi] += heldout_loss(p, ho, r.coefficients);
    }
  }
  for (double& v : out.mean_loss) v /= n_cv_folds;

  std::size_t best = 0;
  for (std::size_t gi = 1; gi < out.grid.size(); ++gi)
    if (out.mean_loss[gi] < out.mean_loss[best]) best = gi;  // ties keep the larger lambda
  out.index = best;
  out.lambda = out.grid[best];
  return out;
}

}  // namespace dmar::solvers
