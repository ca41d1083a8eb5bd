#include "dmar/estimators.hpp"

#include <cmath>

#include "dmar/kernels.hpp"
#include "dmar/rng.hpp"
#include "dmar/stats.hpp"

namespace dmar::estimators {

namespace {

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double t = std::exp(u);
  return t / (1.0 + t);
}

double mean_sq(std::span<const double> v) {
  return kernels::ops().dot(v.data(), v.data(), v.size()) / static_cast<double>(v.size());
}

}  // namespace

Interval ci_from(double estimate, double sigma_hat, std::size_t n, double level) {
  if (!(level > 0.0 && level < 1.0)) throw contract_error("ci_from: level must lie in (0,1)");
  if (!(sigma_hat >= 0.0)) throw contract_error("ci_from: sigma_hat must be nonnegative");
  if (n == 0) throw contract_error("ci_from: n must be positive");
  const double z = norm_quantile(0.5 * (1.0 + level));
  const double half = z * std::sqrt(sigma_hat / static_cast<double>(n));
  return {estimate - half, estimate + half};
}

DrCore dr_core(std::span<const double> m_values, std::span<const double> ps_values,
               std::span<const std::uint8_t> gamma, const Dataset& ds) {
  const std::size_t n = ds.n();
  if (m_values.size() != n || ps_values.size() != n || gamma.size() != n)
    throw contract_error("dr_core: dimension mismatch");
  DrCore out;
  out.influence.resize(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double term = m_values[i];
    if (gamma[i]) term += (ds.outcome_at(i) - m_values[i]) / ps_values[i];
    if (!std::isfinite(term)) throw numeric_error("dr_core: non-finite plug-in term");
    out.influence[i] = term;
    acc += term;
  }
  out.theta = acc / static_cast<double>(n);
  for (double& v : out.influence) v -= out.theta;
  return out;
}

ArmEstimate dr_dmar_arm(const Dataset& ds, int arm, const FoldAssignment& folds,
                        const nuisance::LearnerSpec& learner, CrossFitValues* captured) {
  const std::size_t n = ds.n();
  if (folds.n != n) throw contract_error("dr_dmar_arm: fold assignment size mismatch");
  const ProductIndicator pi = build_product_indicator(ds, arm);

  CrossFitValues values;
  values.m_values.assign(n, 0.0);
  values.ps_values.assign(n, 0.0);

  for (int k = 0; k < folds.k_folds; ++k) {
    const std::vector<std::size_t> train = folds.complement(k);
    const std::vector<std::size_t> eval = folds.in_fold(k);
    std::size_t armed = 0;
    for (std::size_t i : train) armed += pi.gamma[i];
    if (armed == 0)
      throw data_error("empty-arm fold: complement of fold " + std::to_string(k + 1) +
                       " has no labeled arm-" + std::to_string(arm) +
                       " samples; use fewer folds");
    const nuisance::NuisancePair pair =
        nuisance::fit_pair(ds, arm, train, learner, static_cast<std::uint64_t>(k) + 1);
    for (std::size_t i : eval) {
      values.m_values[i] = pair.or_est.or_fn(ds.row(i));
      values.ps_values[i] = pair.ps_est.ps_fn(ds.row(i));
    }
    if (pair.ps_est.clip_events) values.clip_events += pair.ps_est.clip_events->load();
    values.solver_clamps += pair.or_est.solver_clamps + pair.ps_est.solver_clamps;
  }

  DrCore core = dr_core(values.m_values, values.ps_values, pi.gamma, ds);
  ArmEstimate est;
  est.arm = arm;
  est.theta_hat = core.theta;
  est.sigma_hat = mean_sq(core.influence);
  est.influence = std::move(core.influence);
  if (captured) *captured = std::move(values);
  return est;
}

AteReport dr_dmar_ate(const Dataset& ds, int k_folds, const nuisance::LearnerSpec& learner,
                      std::uint64_t seed, int n_repeats, double ci_level) {
  if (n_repeats < 1) throw contract_error("dr_dmar_ate: n_repeats must be >= 1");
  const std::size_t n = ds.n();
  const ProductIndicator g1 = build_product_indicator(ds, 1);
  const ProductIndicator g0 = build_product_indicator(ds, 0);

  AteReport report;
  report.n = n;
  report.n_repeats = n_repeats;
  report.ci_level = ci_level;
  report.arm1.arm = 1;
  report.arm0.arm = 0;
  report.arm1.influence.assign(n, 0.0);
  report.arm0.influence.assign(n, 0.0);

  for (int rep = 0; rep < n_repeats; ++rep) {
    const FoldAssignment folds =
        make_folds(n, k_folds, derive_seed(seed, 0xF01D, static_cast<std::uint64_t>(rep)));
    nuisance::LearnerSpec spec = learner;
    spec.cv_seed = derive_seed(seed, 0xCADE, static_cast<std::uint64_t>(rep));

    CrossFitValues v1, v0;
    const ArmEstimate a1 = dr_dmar_arm(ds, 1, folds, spec, &v1);
    const ArmEstimate a0 = dr_dmar_arm(ds, 0, folds, spec, &v0);

    const double mu = a1.theta_hat - a0.theta_hat;
    double sigma = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double psi = a1.influence[i] - a0.influence[i];
      sigma += psi * psi;
    }
    sigma /= static_cast<double>(n);

    report.mu_hat += mu;
    report.sigma_hat += sigma;
    report.arm1.theta_hat += a1.theta_hat;
    report.arm0.theta_hat += a0.theta_hat;
    report.arm1.sigma_hat += a1.sigma_hat;
    report.arm0.sigma_hat += a0.sigma_hat;
    for (std::size_t i = 0; i < n; ++i) {
      report.arm1.influence[i] += a1.influence[i];
      report.arm0.influence[i] += a0.influence[i];
    }
    report.diagnostics.a_hat_1 += effective_overlap(v1.ps_values);
    report.diagnostics.a_hat_0 += effective_overlap(v0.ps_values);
    report.diagnostics.ps_clip_events += v1.clip_events + v0.clip_events;
    report.diagnostics.solver_clamp_events += v1.solver_clamps + v0.solver_clamps;
  }

  const double inv_r = 1.0 / static_cast<double>(n_repeats);
  report.mu_hat *= inv_r;
  report.sigma_hat *= inv_r;
  report.arm1.theta_hat *= inv_r;
  report.arm0.theta_hat *= inv_r;
  report.arm1.sigma_hat *= inv_r;
  report.arm0.sigma_hat *= inv_r;
  for (std::size_t i = 0; i < n; ++i) {
    report.arm1.influence[i] *= inv_r;
    report.arm0.influence[i] *= inv_r;
  }
  report.diagnostics.a_hat_1 *= inv_r;
  report.diagnostics.a_hat_0 *= inv_r;
  double s1 = 0.0, s0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s1 += g1.gamma[i];
    s0 += g0.gamma[i];
  }
  report.diagnostics.gamma_bar_1 = s1 / static_cast<double>(n);
  report.diagnostics.gamma_bar_0 = s0 / static_cast<double>(n);
  report.diagnostics.effective_sample_size =
      static_cast<double>(n) * std::min(report.diagnostics.a_hat_1, report.diagnostics.a_hat_0);
  report.ci = ci_from(report.mu_hat, report.sigma_hat, n, ci_level);
  return report;
}

namespace {

struct TbrHalfFit {
  double gamma_hat = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha;
  long long clamps = 0;
  bool degraded = false;
};

TbrHalfFit fit_tbr_half(const Dataset& ds, const ProductIndicator& pi,
                        std::span<const std::size_t> idx, const BrssOptions& opt,
                        std::uint64_t seed) {
  TbrHalfFit out;
  std::vector<std::uint8_t> gamma;
  gamma.reserve(idx.size());
  std::size_t ones = 0;
  for (std::size_t i : idx) {
    gamma.push_back(pi.gamma[i]);
    ones += pi.gamma[i];
  }
  if (ones == 0 || ones == idx.size())
    throw data_error("brss: degenerate half (product indicator constant)");
  out.gamma_hat = static_cast<double>(ones) / static_cast<double>(idx.size());

  DesignMatrix x = DesignMatrix::from_rows(ds.covariates(), idx);
  std::vector<double> y(idx.size(), 0.0);
  for (std::size_t r = 0; r < idx.size(); ++r)
    if (gamma[r]) y[r] = ds.outcome_at(idx[r]);

  nuisance::FitContext ctx;
  ctx.policy = opt.lambda_policy;
  ctx.cv_folds = opt.cv_folds;
  ctx.seed = seed;
  ctx.solver = opt.solver;

  solvers::CvProblem pb;
  pb.kind = solvers::ProblemKind::tbr_beta;
  pb.x = &x;
  pb.gamma = gamma;
  pb.gamma_hat = out.gamma_hat;
  solvers::SolverResult beta_fit =
      nuisance::fit_with_policy(pb, ctx, opt.lambda_policy.fixed_ps, 31, nullptr);
  if (!beta_fit.converged)
    throw numeric_error("brss: tilted propensity fit did not converge (kkt residual " +
                        std::to_string(beta_fit.kkt_residual) + ")");
  out.clamps += beta_fit.clamp_count;
  out.degraded |= beta_fit.clamp_count > 0;
  out.beta = std::move(beta_fit.coefficients);

  solvers::CvProblem pa;
  pa.kind = solvers::ProblemKind::tbr_alpha;
  pa.x = &x;
  pa.y = y;
  pa.gamma = gamma;
  pa.gamma_hat = out.gamma_hat;
  pa.beta_hat = out.beta;
  solvers::SolverResult alpha_fit =
      nuisance::fit_with_policy(pa, ctx, opt.lambda_policy.fixed_or, 37, nullptr);
  if (!alpha_fit.converged)
    throw numeric_error("brss: tilted regression fit did not converge (kkt residual " +
                        std::to_string(alpha_fit.kkt_residual) + ")");
  out.clamps += alpha_fit.clamp_count;
  out.degraded |= alpha_fit.clamp_count > 0;
  out.alpha = std::move(alpha_fit.coefficients);
  return out;
}

BrssValues brss_fit_values(const Dataset& ds, int arm, std::uint64_t seed,
                           const BrssOptions& opt) {
  const std::size_t n = ds.n();
  const ProductIndicator pi = build_product_indicator(ds, arm);
  const FoldAssignment halves = make_folds(n, 2, derive_seed(seed, 0xB1));

  BrssValues v;
  v.half[0] = halves.in_fold(0);
  v.half[1] = halves.in_fold(1);

  TbrHalfFit fit[2];
  for (int k = 0; k < 2; ++k) {
    fit[k] = fit_tbr_half(ds, pi, v.half[k], opt,
                          derive_seed(seed, 0x5EED, static_cast<std::uint64_t>(arm) * 2 + k));
    v.gamma_hat[k] = fit[k].gamma_hat;
    v.beta_hat[k] = fit[k].beta;
    v.alpha_hat[k] = fit[k].alpha;
    v.solver_clamps += fit[k].clamps;
    v.degraded |= fit[k].degraded;
  }

  const double floor = 1.0 / (2.0 * static_cast<double>(n));
  v.or_values.assign(n, 0.0);
  v.ps_values.assign(n, 0.0);
  for (int k = 0; k < 2; ++k) {
    const int other = 1 - k;
    const double log_gamma = std::log(v.gamma_hat[k]);
    for (std::size_t i : v.half[k]) {
      const auto x = ds.row(i);
      v.or_values[i] = kernels::ops().dot(v.alpha_hat[other].data(), x.data(), x.size());
      double g = logistic(kernels::ops().dot(v.beta_hat[k].data(), x.data(), x.size()) + log_gamma);
      if (g < floor) {
        g = floor;
        ++v.clip_events;
      }
      v.ps_values[i] = g;
    }
  }

  // averaged coefficients for the variance expression
  const std::size_t d = ds.dim();
  std::vector<double> alpha_bar(d), beta_bar(d);
  for (std::size_t j = 0; j < d; ++j) {
    alpha_bar[j] = 0.5 * (v.alpha_hat[0][j] + v.alpha_hat[1][j]);
    beta_bar[j] = 0.5 * (v.beta_hat[0][j] + v.beta_hat[1][j]);
  }
  const double gamma_bar = 0.5 * (v.gamma_hat[0] + v.gamma_hat[1]);
  const double log_gamma_bar = std::log(gamma_bar);
  v.or_bar.assign(n, 0.0);
  v.ps_bar.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = ds.row(i);
    v.or_bar[i] = kernels::ops().dot(alpha_bar.data(), x.data(), x.size());
    double g = logistic(kernels::ops().dot(beta_bar.data(), x.data(), x.size()) + log_gamma_bar);
    if (g < floor) {
      g = floor;
      ++v.clip_events;
    }
    v.ps_bar[i] = g;
  }
  return v;
}

ArmEstimate brss_arm_from_values(const Dataset& ds, int arm, const BrssValues& v) {
  const std::size_t n = ds.n();
  const ProductIndicator pi = build_product_indicator(ds, arm);

  double theta_half[2] = {0.0, 0.0};
  std::vector<double> term(n, 0.0);
  for (int k = 0; k < 2; ++k) {
    double acc = 0.0;
    for (std::size_t i : v.half[k]) {
      double t = v.or_values[i];
      if (pi.gamma[i]) t += (ds.outcome_at(i) - v.or_values[i]) / v.ps_values[i];
      if (!std::isfinite(t)) throw numeric_error("brss: non-finite plug-in term");
      term[i] = t;
      acc += t;
    }
    theta_half[k] = acc / static_cast<double>(v.half[k].size());
  }

  ArmEstimate est;
  est.arm = arm;
  est.theta_hat = 0.5 * (theta_half[0] + theta_half[1]);

  est.influence.resize(n);
  const double term_mean = kernels::ops().sum(term.data(), n) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) est.influence[i] = term[i] - term_mean;

  double sigma = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = v.or_bar[i];
    if (pi.gamma[i]) t += (ds.outcome_at(i) - v.or_bar[i]) / v.ps_bar[i];
    const double dev = t - est.theta_hat;
    sigma += dev * dev;
  }
  est.sigma_hat = sigma / static_cast<double>(n);
  return est;
}

}  // namespace

ArmEstimate brss_arm(const Dataset& ds, int arm, std::uint64_t seed, const BrssOptions& opt,
                     BrssValues* captured) {
  BrssValues v = brss_fit_values(ds, arm, seed, opt);
  ArmEstimate est = brss_arm_from_values(ds, arm, v);
  if (captured) *captured = std::move(v);
  return est;
}

AteReport brss_ate(const Dataset& ds, std::uint64_t seed, const BrssOptions& opt,
                   double ci_level) {
  const std::size_t n = ds.n();
  const ProductIndicator g1 = build_product_indicator(ds, 1);
  const ProductIndicator g0 = build_product_indicator(ds, 0);

  BrssValues v1, v0;
  AteReport report;
  report.n = n;
  report.ci_level = ci_level;
  report.arm1 = brss_arm(ds, 1, seed, opt, &v1);
  report.arm0 = brss_arm(ds, 0, seed, opt, &v0);
  report.mu_hat = report.arm1.theta_hat - report.arm0.theta_hat;

  // joint influence at averaged coefficients
  double sigma = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double t1 = v1.or_bar[i];
    if (g1.gamma[i]) t1 += (ds.outcome_at(i) - v1.or_bar[i]) / v1.ps_bar[i];
    double t0 = v0.or_bar[i];
    if (g0.gamma[i]) t0 += (ds.outcome_at(i) - v0.or_bar[i]) / v0.ps_bar[i];
    const double dev = t1 - t0 - report.mu_hat;
    sigma += dev * dev;
  }
  report.sigma_hat = sigma / static_cast<double>(n);
  report.ci = ci_from(report.mu_hat, report.sigma_hat, n, ci_level);

  double s1 = 0.0, s0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s1 += g1.gamma[i];
    s0 += g0.gamma[i];
  }
  report.diagnostics.gamma_bar_1 = s1 / static_cast<double>(n);
  report.diagnostics.gamma_bar_0 = s0 / static_cast<double>(n);
  report.diagnostics.a_hat_1 = effective_overlap(v1.ps_bar);
  report.diagnostics.a_hat_0 = effective_overlap(v0.ps_bar);
  report.diagnostics.effective_sample_size =
      static_cast<double>(n) * std::min(report.diagnostics.a_hat_1, report.diagnostics.a_hat_0);
  report.diagnostics.ps_clip_events = v1.clip_events + v0.clip_events;
  report.diagnostics.solver_clamp_events = v1.solver_clamps + v0.solver_clamps;
  report.diagnostics.degraded = v1.degraded || v0.degraded;
  return report;
}

}  // namespace dmar::estimators
