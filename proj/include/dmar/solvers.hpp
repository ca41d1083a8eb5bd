#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmar/matrix.hpp"

namespace dmar::solvers {

struct SolverConfig {
  double tol = 1e-7;           // sup-norm KKT stopping threshold
  std::size_t max_iter = 10000;
  double step_shrink = 0.5;    // backtracking factor
  std::vector<double> init;    // empty means all-zero start
  std::vector<double>* trace = nullptr;  // per-sweep/iteration objective, if wanted
  // when false, column 0 is an unpenalized intercept (plain nuisance fits);
  // the tilted problems always penalize every coordinate
  bool penalize_intercept = true;
};

// Every solver returns its coefficient vector together with a KKT
// certificate: kkt_residual is the largest per-coordinate violation of the
// subgradient optimality conditions of the penalized problem, so
// converged == true guarantees kkt_residual <= tol.
struct SolverResult {
  std::vector<double> coefficients;
  double objective = 0.0;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  long long clamp_count = 0;  // exponent clamps hit (tilted losses only)
};

// Weighted lasso, objective (1/M) sum_i w_i (y_i - x_i'a)^2 + lambda ||a||_1,
// solved by cyclic coordinate descent with exact soft-threshold updates.
SolverResult fit_lasso_ls(const DesignMatrix& x, std::span<const double> y,
                          std::span<const double> w, double lambda,
                          const SolverConfig& cfg = {});

// l1-penalized logistic regression with a fixed per-sample offset,
// objective (1/M) sum_i [log(1+exp(x_i'b + o_i)) - g_i (x_i'b + o_i)]
//             + lambda ||b||_1,
// solved by proximal gradient with backtracking. The penalty covers every
// coordinate including the intercept; any diverging level belongs in the
// offset.
SolverResult fit_logistic_l1_offset(const DesignMatrix& x, std::span<const std::uint8_t> labels,
                                    std::span<const double> offset, double lambda,
                                    const SolverConfig& cfg = {});

// Tilted propensity fit, objective
//   (1/M) sum_i [(1-g_i) x_i'b + (g_i/gamma_hat) exp(-x_i'b)] + lambda ||b||_1.
// Exponent arguments are clamped at +-40 (counted in clamp_count). At the
// optimum the KKT conditions give the covariate balancing bound
//   || (1/M) sum_i (1 - g_i/ghat_i) x_i ||_inf <= lambda + tol,
// where ghat_i = logistic(x_i'b + log gamma_hat).
SolverResult fit_tbr_beta(const DesignMatrix& x, std::span<const std::uint8_t> gamma,
                          double gamma_hat, double lambda, const SolverConfig& cfg = {});

// Tilted outcome regression, objective
//   (1/M) sum_i (g_i/gamma_hat) exp(-x_i'beta_hat) (y_i - x_i'a)^2 + lambda ||a||_1.
// Delegates to fit_lasso_ls on the labeled rows with weights rescaled so the
// objective matches the full-sample normalization exactly.
SolverResult fit_tbr_alpha(const DesignMatrix& x, std::span<const std::uint8_t> gamma,
                           std::span<const double> y, double gamma_hat,
                           std::span<const double> beta_hat, double lambda,
                           const SolverConfig& cfg = {});

// ---- loss evaluation (shared with cross-validation scoring and the tests) --

double lasso_objective(const DesignMatrix& x, std::span<const double> y,
                       std::span<const double> w, double lambda, std::span<const double> coef);
void lasso_smooth_gradient(const DesignMatrix& x, std::span<const double> y,
                           std::span<const double> w, std::span<const double> coef,
                           std::span<double> grad);

double logistic_offset_loss(const DesignMatrix& x, std::span<const std::uint8_t> labels,
                            std::span<const double> offset, std::span<const double> coef);
void logistic_offset_gradient(const DesignMatrix& x, std::span<const std::uint8_t> labels,
                              std::span<const double> offset, std::span<const double> coef,
                              std::span<double> grad);

double tbr_beta_loss(const DesignMatrix& x, std::span<const std::uint8_t> gamma,
                     double gamma_hat, std::span<const double> coef,
                     long long* clamp_count = nullptr);
void tbr_beta_gradient(const DesignMatrix& x, std::span<const std::uint8_t> gamma,
                       double gamma_hat, std::span<const double> coef, std::span<double> grad);

// Max per-coordinate violation of the l1 subgradient conditions at coef,
// given the smooth-part gradient.
double kkt_residual_l1(std::span<const double> smooth_grad, std::span<const double> coef,
                       double lambda);

// ---- lambda selection ------------------------------------------------------

enum class ProblemKind { lasso_ls, logistic_offset, tbr_beta, tbr_alpha };

// One lambda-selection problem: the slice plus whatever fixed quantities the
// loss needs. Spans must outlive the call.
struct CvProblem {
  ProblemKind kind = ProblemKind::lasso_ls;
  const DesignMatrix* x = nullptr;
  std::span<const double> y;                // lasso_ls / tbr_alpha
  std::span<const double> w;                // lasso_ls (unit weights if empty)
  std::span<const std::uint8_t> gamma;      // labels / indicators; also stratifies folds
  std::span<const double> offset;           // logistic_offset
  double gamma_hat = 0.0;                   // tbr problems
  std::span<const double> beta_hat;         // tbr_alpha
  bool penalize_intercept = true;           // must match the SolverConfig used to fit
};

struct CvResult {
  double lambda = 0.0;
  std::size_t index = 0;               // position in the grid
  std::vector<double> grid;            // as scored, descending
  std::vector<double> mean_loss;       // held-out loss per grid point
};

// KKT-at-zero threshold: the smallest lambda for which 0 solves the problem.
double lambda_max_for(const CvProblem& p);

// Geometric grid from lambda_max down to ratio*lambda_max, descending.
std::vector<double> default_lambda_grid(double lambda_max, int points = 50, double ratio = 1e-3);

// K-fold cross-validation over the grid, folds stratified by gamma. Scores
// the problem's own unpenalized loss on the held-out part and returns the
// minimizer, ties broken toward the larger lambda. Path fits are warm-started
// from the previous grid point.
CvResult cross_validate_lambda(const CvProblem& p, std::span<const double> grid, int n_cv_folds,
                               std::uint64_t seed, const SolverConfig& cfg = {});

}  // namespace dmar::solvers
