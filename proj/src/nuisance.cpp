#include "dmar/nuisance.hpp"

#include <cmath>

#include "dmar/kernels.hpp"
#include "dmar/rng.hpp"

namespace dmar::nuisance {

namespace {

using solvers::CvProblem;
using solvers::ProblemKind;
using solvers::SolverConfig;
using solvers::SolverResult;

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double t = std::exp(u);
  return t / (1.0 + t);
}

// propensity evaluator with the 1/(2N) floor; upper end is g(.) <= 1 already
std::function<double(std::span<const double>)> make_clipped_ps(
    std::function<double(std::span<const double>)> raw, std::size_t n,
    std::shared_ptr<std::atomic<long long>> counter) {
  const double floor = 1.0 / (2.0 * static_cast<double>(n));
  return [raw = std::move(raw), floor, counter](std::span<const double> x) {
    double g = raw(x);
    if (g > 1.0) g = 1.0;
    if (g < floor) {
      g = floor;
      counter->fetch_add(1, std::memory_order_relaxed);
    }
    return g;
  };
}

std::vector<std::uint8_t> gather_u8(const std::vector<std::uint8_t>& v,
                                    std::span<const std::size_t> idx) {
  std::vector<std::uint8_t> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

SolverResult solve_cv_problem(const CvProblem& prob, double lambda, const SolverConfig& cfg) {
  switch (prob.kind) {
    case ProblemKind::lasso_ls: {
      if (!prob.w.empty()) return solvers::fit_lasso_ls(*prob.x, prob.y, prob.w, lambda, cfg);
      const std::vector<double> w(prob.x->n_rows, 1.0);
      return solvers::fit_lasso_ls(*prob.x, prob.y, w, lambda, cfg);
    }
    case ProblemKind::logistic_offset:
      return solvers::fit_logistic_l1_offset(*prob.x, prob.gamma, prob.offset, lambda, cfg);
    case ProblemKind::tbr_beta:
      return solvers::fit_tbr_beta(*prob.x, prob.gamma, prob.gamma_hat, lambda, cfg);
    case ProblemKind::tbr_alpha:
      return solvers::fit_tbr_alpha(*prob.x, prob.gamma, prob.y, prob.gamma_hat, prob.beta_hat,
                                    lambda, cfg);
  }
  throw contract_error("unreachable");
}

// linear predictor closure over a coefficient vector
std::function<double(std::span<const double>)> linear_fn(std::vector<double> coef) {
  return [coef = std::move(coef)](std::span<const double> x) {
    return kernels::ops().dot(coef.data(), x.data(), x.size());
  };
}

std::vector<std::uint8_t> effective_labels(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<std::uint8_t> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(static_cast<std::uint8_t>(ds.effective_label(i)));
  return out;
}

}  // namespace

SolverResult fit_with_policy(const CvProblem& prob, const FitContext& ctx, double fixed_lambda,
                             std::uint64_t salt, std::optional<double>* lambda_out) {
  if (!ctx.policy.cv) {
    if (lambda_out) *lambda_out = fixed_lambda;
    return solve_cv_problem(prob, fixed_lambda, ctx.solver);
  }
  // small slices cannot carry the requested fold count; clamp so every fold
  // keeps a labeled sample (and an unlabeled one where the loss needs it)
  std::size_t ones = 0;
  for (std::uint8_t g : prob.gamma) ones += g;
  const std::size_t zeros = prob.gamma.size() - ones;
  if (ones < 2) throw data_error("lambda selection: too few labeled rows to cross-validate");
  std::size_t folds = std::min<std::size_t>(ctx.cv_folds, ones);
  if (prob.kind == solvers::ProblemKind::tbr_beta) {
    if (zeros < 2)
      throw data_error("lambda selection: too few unlabeled rows to cross-validate");
    folds = std::min(folds, zeros);
  } else if (zeros > 0) {
    folds = std::min(folds, std::max<std::size_t>(zeros, 2));
  }
  folds = std::max<std::size_t>(folds, 2);

  const double lmax = solvers::lambda_max_for(prob);
  const std::vector<double> grid = solvers::default_lambda_grid(lmax);
  const solvers::CvResult cv = solvers::cross_validate_lambda(
      prob, grid, static_cast<int>(folds), derive_seed(ctx.seed, salt), ctx.solver);
  if (lambda_out) *lambda_out = cv.lambda;

  // warm the final fit by walking the path on the full slice at a relaxed
  // lambda-scaled tolerance down to the chosen point
  SolverConfig path_cfg = ctx.solver;
  path_cfg.max_iter = std::min<std::size_t>(ctx.solver.max_iter, 5000);
  path_cfg.trace = nullptr;
  std::vector<double> warm;
  for (std::size_t gi = 0; gi < cv.index; ++gi) {
    path_cfg.tol = std::max(ctx.solver.tol, std::min(1e-5, 1e-2 * cv.grid[gi]));
    path_cfg.init = warm;
    warm = solve_cv_problem(prob, cv.grid[gi], path_cfg).coefficients;
  }
  SolverConfig final_cfg = ctx.solver;
  final_cfg.init = warm;
  return solve_cv_problem(prob, cv.lambda, final_cfg);
}

NuisanceEstimate fit_or_lasso(const Dataset& ds, int arm,
                              std::span<const std::size_t> train_indices, const FitContext& ctx) {
  const ProductIndicator pi = build_product_indicator(ds, arm);
  std::vector<std::size_t> armed;
  for (std::size_t i : train_indices)
    if (pi.gamma[i]) armed.push_back(i);
  if (armed.size() < 2)
    throw data_error("fit_or_lasso: fewer than 2 labeled arm-" + std::to_string(arm) +
                     " rows in training slice");

  DesignMatrix x = DesignMatrix::from_rows(ds.covariates(), armed);
  std::vector<double> y;
  y.reserve(armed.size());
  for (std::size_t i : armed) y.push_back(ds.outcome_at(i));
  const std::vector<double> w(armed.size(), 1.0);
  const std::vector<std::uint8_t> ones(armed.size(), 1);

  CvProblem prob;
  prob.kind = ProblemKind::lasso_ls;
  prob.x = &x;
  prob.y = y;
  prob.w = w;
  prob.gamma = ones;
  prob.penalize_intercept = false;  // plain working fits keep a free intercept

  NuisanceEstimate est;
  est.arm = arm;
  est.method_tag = "or_lasso";
  FitContext ctx_free = ctx;
  ctx_free.solver.penalize_intercept = false;
  SolverResult fit = fit_with_policy(prob, ctx_free, ctx.policy.fixed_or, 11, &est.lambda_or);
  est.or_coef = fit.coefficients;
  est.or_fn = linear_fn(fit.coefficients);
  return est;
}

NuisanceEstimate fit_ps_offset_logistic(const Dataset& ds, int arm,
                                        std::span<const std::size_t> train_indices,
                                        const FitContext& ctx) {
  const ProductIndicator pi = build_product_indicator(ds, arm);
  std::vector<std::uint8_t> gamma = gather_u8(pi.gamma, train_indices);
  std::size_t ones = 0;
  for (std::uint8_t g : gamma) ones += g;
  if (ones == 0 || ones == gamma.size())
    throw data_error("fit_ps_offset_logistic: degenerate product indicator on slice");
  const double gamma_bar = static_cast<double>(ones) / static_cast<double>(gamma.size());

  DesignMatrix x = DesignMatrix::from_rows(ds.covariates(), train_indices);
  const std::vector<double> offset(gamma.size(), std::log(gamma_bar));

  CvProblem prob;
  prob.kind = ProblemKind::logistic_offset;
  prob.x = &x;
  prob.gamma = gamma;
  prob.offset = offset;
  prob.penalize_intercept = false;

  NuisanceEstimate est;
  est.arm = arm;
  est.method_tag = "ps_offset_logistic";
  FitContext ctx_free = ctx;
  ctx_free.solver.penalize_intercept = false;
  SolverResult fit = fit_with_policy(prob, ctx_free, ctx.policy.fixed_ps, 13, &est.lambda_ps);
  est.ps_coef = fit.coefficients;
  est.clip_events = std::make_shared<std::atomic<long long>>(0);
  const double log_gamma = std::log(gamma_bar);
  auto coef = fit.coefficients;
  est.ps_fn = make_clipped_ps(
      [coef, log_gamma](std::span<const double> xr) {
        return logistic(kernels::ops().dot(coef.data(), xr.data(), xr.size()) + log_gamma);
      },
      ds.n(), est.clip_events);
  return est;
}

NuisanceEstimate fit_ps_product(const Dataset& ds, int arm,
                                std::span<const std::size_t> train_indices,
                                const FitContext& ctx) {
  // labeling component: offset logistic of R on X over the whole slice
  std::vector<std::uint8_t> r = effective_labels(ds, train_indices);
  std::size_t r_ones = 0;
  for (std::uint8_t b : r) r_ones += b;
  if (r_ones == 0 || r_ones == r.size())
    throw data_error("fit_ps_product: labeling indicator degenerate on slice");
  const double r_bar = static_cast<double>(r_ones) / static_cast<double>(r.size());

  DesignMatrix x = DesignMatrix::from_rows(ds.covariates(), train_indices);
  const std::vector<double> offset(r.size(), std::log(r_bar));

  CvProblem prob_p;
  prob_p.kind = ProblemKind::logistic_offset;
  prob_p.x = &x;
  prob_p.gamma = r;
  prob_p.offset = offset;
  prob_p.penalize_intercept = false;

  NuisanceEstimate est;
  est.arm = arm;
  est.method_tag = "ps_product";
  FitContext ctx_free = ctx;
  ctx_free.solver.penalize_intercept = false;
  SolverResult fit_p = fit_with_policy(prob_p, ctx_free, ctx.policy.fixed_ps, 17, &est.lambda_ps);
  est.ps_coef = fit_p.coefficients;

  // treatment component: plain l1 logistic of T on X, labeled rows only
  std::vector<std::size_t> labeled;
  for (std::size_t i : train_indices)
    if (ds.effective_label(i)) labeled.push_back(i);
  std::vector<std::uint8_t> t;
  t.reserve(labeled.size());
  for (std::size_t i : labeled) t.push_back(static_cast<std::uint8_t>(ds.treatment_at(i)));
  std::size_t t_ones = 0;
  for (std::uint8_t b : t) t_ones += b;
  if (t_ones == 0 || t_ones == t.size())
    throw data_error("fit_ps_product: labeled slice contains a single treatment arm");

  DesignMatrix xt = DesignMatrix::from_rows(ds.covariates(), labeled);
  const std::vector<double> zero_offset(labeled.size(), 0.0);

  CvProblem prob_t;
  prob_t.kind = ProblemKind::logistic_offset;
  prob_t.x = &xt;
  prob_t.gamma = t;
  prob_t.offset = zero_offset;
  prob_t.penalize_intercept = false;
  SolverResult fit_t = fit_with_policy(prob_t, ctx_free, ctx.policy.fixed_ps, 19, &est.lambda_ps2);
  est.ps_coef2 = fit_t.coefficients;

  est.clip_events = std::make_shared<std::atomic<long long>>(0);
  const double log_r = std::log(r_bar);
  auto cp = fit_p.coefficients;
  auto ct = fit_t.coefficients;
  est.ps_fn = make_clipped_ps(
      [cp, ct, log_r, arm](std::span<const double> xr) {
        const double p = logistic(kernels::ops().dot(cp.data(), xr.data(), xr.size()) + log_r);
        double pi1 = logistic(kernels::ops().dot(ct.data(), xr.data(), xr.size()));
        return p * (arm == 1 ? pi1 : 1.0 - pi1);
      },
      ds.n(), est.clip_events);
  return est;
}

NuisanceEstimate fit_ps_constant_mcar(const Dataset& ds, int arm,
                                      std::span<const std::size_t> train_indices,
                                      const FitContext& ctx) {
  std::vector<std::uint8_t> r = effective_labels(ds, train_indices);
  std::size_t r_ones = 0;
  for (std::uint8_t b : r) r_ones += b;
  if (r_ones == 0) throw data_error("fit_ps_constant_mcar: no labeled rows in slice");
  const double r_bar = static_cast<double>(r_ones) / static_cast<double>(r.size());

  // treatment model over the whole slice (treatment assumed fully observed
  // here; with a treatment label, restrict to rows where it is readable)
  std::vector<std::size_t> rows;
  rows.reserve(train_indices.size());
  for (std::size_t i : train_indices)
    if (!ds.treatment_label() || (*ds.treatment_label())[i]) rows.push_back(i);
  std::vector<std::uint8_t> t;
  t.reserve(rows.size());
  for (std::size_t i : rows) t.push_back(static_cast<std::uint8_t>(ds.treatment_at(i)));
  std::size_t t_ones = 0;
  for (std::uint8_t b : t) t_ones += b;
  if (t_ones == 0 || t_ones == t.size())
    throw data_error("fit_ps_constant_mcar: slice contains a single treatment arm");

  DesignMatrix xt = DesignMatrix::from_rows(ds.covariates(), rows);
  const std::vector<double> zero_offset(rows.size(), 0.0);

  CvProblem prob_t;
  prob_t.kind = ProblemKind::logistic_offset;
  prob_t.x = &xt;
  prob_t.gamma = t;
  prob_t.offset = zero_offset;
  prob_t.penalize_intercept = false;

  NuisanceEstimate est;
  est.arm = arm;
  est.method_tag = "ps_constant_mcar";
  FitContext ctx_free = ctx;
  ctx_free.solver.penalize_intercept = false;
  SolverResult fit_t = fit_with_policy(prob_t, ctx_free, ctx.policy.fixed_ps, 23, &est.lambda_ps);
  est.ps_coef = fit_t.coefficients;

  est.clip_events = std::make_shared<std::atomic<long long>>(0);
  auto ct = fit_t.coefficients;
  est.ps_fn = make_clipped_ps(
      [ct, r_bar, arm](std::span<const double> xr) {
        double pi1 = logistic(kernels::ops().dot(ct.data(), xr.data(), xr.size()));
        return r_bar * (arm == 1 ? pi1 : 1.0 - pi1);
      },
      ds.n(), est.clip_events);
  return est;
}

NuisanceEstimate oracle_nuisance(const TruthFunctions& truth, int arm, std::size_t n_for_floor) {
  NuisanceEstimate est;
  est.arm = arm;
  est.method_tag = "oracle";
  est.or_fn = [&truth, arm](std::span<const double> x) { return truth.m(arm, x); };
  est.clip_events = std::make_shared<std::atomic<long long>>(0);
  est.ps_fn = make_clipped_ps(
      [&truth, arm](std::span<const double> x) { return truth.product_ps(arm, x); }, n_for_floor,
      est.clip_events);
  return est;
}

NuisancePair fit_pair(const Dataset& ds, int arm, std::span<const std::size_t> train_indices,
                      const LearnerSpec& spec, std::uint64_t seed_salt) {
  FitContext ctx;
  ctx.policy = spec.lambda_policy;
  ctx.cv_folds = spec.cv_folds;
  ctx.seed = derive_seed(spec.cv_seed, seed_salt, static_cast<std::uint64_t>(arm));

  NuisancePair pair;
  switch (spec.or_method) {
    case OrMethod::lasso_linear:
      pair.or_est = fit_or_lasso(ds, arm, train_indices, ctx);
      break;
    case OrMethod::oracle:
      if (!spec.oracle) throw contract_error("oracle OR method requires a truth oracle");
      pair.or_est = oracle_nuisance(*spec.oracle, arm, ds.n());
      break;
    case OrMethod::zero:
      pair.or_est.arm = arm;
      pair.or_est.method_tag = "or_zero";
      pair.or_est.or_fn = [](std::span<const double>) { return 0.0; };
      break;
  }
  switch (spec.ps_method) {
    case PsMethod::offset_logistic_direct:
      pair.ps_est = fit_ps_offset_logistic(ds, arm, train_indices, ctx);
      break;
    case PsMethod::product_two_logistic:
      pair.ps_est = fit_ps_product(ds, arm, train_indices, ctx);
      break;
    case PsMethod::constant_mcar:
      pair.ps_est = fit_ps_constant_mcar(ds, arm, train_indices, ctx);
      break;
    case PsMethod::oracle:
      if (!spec.oracle) throw contract_error("oracle PS method requires a truth oracle");
      pair.ps_est = oracle_nuisance(*spec.oracle, arm, ds.n());
      break;
  }
  return pair;
}

}  // namespace dmar::nuisance
