#include "dmar/simulate.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "dmar/estimators.hpp"
#include "dmar/kernels.hpp"
#include "dmar/stats.hpp"

namespace dmar::simulate {

namespace {

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double t = std::exp(u);
  return t / (1.0 + t);
}

bool fully_labeled(Dgp dgp) { return dgp == Dgp::d || dgp == Dgp::e; }

// s_alpha-sparse regression slope 3*(1, 1, 1/sqrt(s-1), ..., 0)
std::vector<double> alpha_pattern(std::size_t d, int s) {
  std::vector<double> a(d, 0.0);
  a[0] = 3.0;
  a[1] = 3.0;
  for (int k = 0; k < s - 1; ++k) a[2 + k] = 3.0 / std::sqrt(static_cast<double>(s - 1));
  return a;
}

// propensity slope (intercept, 1, 1/(s-1), ..., 0), optionally sign-flipped
std::vector<double> beta_pattern(std::size_t d, int s, double intercept, double sign) {
  std::vector<double> b(d, 0.0);
  b[0] = intercept;
  b[1] = sign;
  for (int k = 0; k < s - 1; ++k) b[2 + k] = sign / static_cast<double>(s - 1);
  return b;
}

std::vector<double> omega_pattern(std::size_t d, int s) {
  std::vector<double> w(d, 0.0);
  w[1] = 1.0;
  for (int k = 0; k < s - 1; ++k) w[2 + k] = 1.0 / static_cast<double>(s - 1);
  return w;
}

std::vector<double> eta_pattern(std::size_t d, int s) {
  std::vector<double> e(d, 0.0);
  e[1] = 1.0;
  for (int k = 0; k < s - 1; ++k) e[2 + k] = 1.0 / std::sqrt(static_cast<double>(s - 1));
  return e;
}

std::vector<double> geometric(std::size_t d, double first, double scale, double decay) {
  std::vector<double> v(d, 0.0);
  v[0] = first;
  double p = decay;
  for (std::size_t k = 1; k < d; ++k, p *= decay) v[k] = scale * p;
  return v;
}

double quad_dot(std::span<const double> coef, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) acc += coef[j] * x[j] * x[j];
  return acc;
}

}  // namespace

Dgp parse_dgp(const std::string& s) {
  if (s == "a") return Dgp::a;
  if (s == "b") return Dgp::b;
  if (s == "c") return Dgp::c;
  if (s == "d") return Dgp::d;
  if (s == "e") return Dgp::e;
  throw data_error("unknown DGP '" + s + "'");
}

std::string dgp_name(Dgp dgp) {
  switch (dgp) {
    case Dgp::a: return "a";
    case Dgp::b: return "b";
    case Dgp::c: return "c";
    case Dgp::d: return "d";
    case Dgp::e: return "e";
  }
  return "?";
}

void validate_spec(const DgpSpec& spec) {
  if (spec.n < 1 || spec.d < 2) throw data_error("spec: need n >= 1 and d >= 2");
  if (!fully_labeled(spec.dgp)) {
    if (spec.s_alpha < 2 || spec.s_alpha > static_cast<int>(spec.d) - 1 || spec.s_beta < 2 ||
        spec.s_beta > static_cast<int>(spec.d) - 1)
      throw data_error("spec: sparsity levels must lie in [2, d-1]");
    if (!(spec.gamma1 > 0.0 && spec.gamma1 <= 0.5) || !(spec.gamma0 > 0.0 && spec.gamma0 <= 0.5))
      throw data_error("spec: gamma targets must lie in (0, 0.5]");
  }
}

// ---------------------------------------------------------------------------
// truth oracle
// ---------------------------------------------------------------------------

double TruthOracle::m(int arm, std::span<const double> x) const {
  const std::vector<double>& a = arm == 1 ? alpha1 : alpha0;
  double v = kernels::ops().dot(a.data(), x.data(), x.size());
  if (dgp == Dgp::c || dgp == Dgp::e) v += quad_dot(arm == 1 ? eta1 : eta0, x);
  return v;
}

double TruthOracle::treat_prob(std::span<const double> x) const {
  switch (dgp) {
    case Dgp::a:
    case Dgp::c: {
      const double g1 = logistic(dot_row(beta1, x));
      const double g0 = logistic(dot_row(beta0, x));
      return 0.5 * (g1 + 1.0 - g0);
    }
    case Dgp::b:
      return 0.3 * std::sin(dot_row(omega, x)) + 0.5;
    case Dgp::d: {
      const double u = dot_row(beta1, x);
      return logistic(u) * (0.3 * std::sin(u) + 0.7);
    }
    case Dgp::e:
      return logistic(dot_row(beta1, x));
  }
  return 0.5;
}

double TruthOracle::label_prob(int t, std::span<const double> x) const {
  if (fully_labeled(dgp)) return 1.0;
  const double pi = treat_prob(x);
  switch (dgp) {
    case Dgp::a:
    case Dgp::c: {
      if (t == 1) return logistic(dot_row(beta1, x)) / pi;
      return logistic(dot_row(beta0, x)) / (1.0 - pi);
    }
    case Dgp::b:
      return logistic(dot_row(t == 1 ? beta1 : beta0, x));
    default:
      return 1.0;
  }
}

double TruthOracle::product_ps(int arm, std::span<const double> x) const {
  switch (dgp) {
    case Dgp::a:
    case Dgp::c:
      return logistic(dot_row(arm == 1 ? beta1 : beta0, x));
    case Dgp::b: {
      const double pi = treat_prob(x);
      const double p = logistic(dot_row(arm == 1 ? beta1 : beta0, x));
      return (arm == 1 ? pi : 1.0 - pi) * p;
    }
    case Dgp::d:
    case Dgp::e: {
      const double pi = treat_prob(x);
      return arm == 1 ? pi : 1.0 - pi;
    }
  }
  return 0.5;
}

// ---------------------------------------------------------------------------
// covariates and calibration
// ---------------------------------------------------------------------------

Matrix gen_covariates(std::size_t n, std::size_t d, Rng& rng) {
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = x.row(i);
    row[0] = 1.0;
    for (std::size_t j = 1; j < d; ++j) row[j] = rng.truncated_normal(2.0);
  }
  return x;
}

double truncated_normal_variance() {
  const double phi2 = 0.3989422804014326779 * std::exp(-2.0);
  const double mass = std::erf(2.0 / std::sqrt(2.0));  // P(|Z| < 2)
  return 1.0 - 4.0 * phi2 / mass;
}

double calibrate_intercept(
    const Matrix& draws, double target, double tol,
    const std::function<double(double, std::span<const double>)>& fn) {
  auto mean_at = [&](double b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < draws.n_rows; ++i) acc += fn(b, draws.row_span(i));
    return acc / static_cast<double>(draws.n_rows);
  };
  double lo = -30.0, hi = 5.0;
  double f_lo = mean_at(lo), f_hi = mean_at(hi);
  if (!(f_lo < target && target < f_hi))
    throw numeric_error("calibrate_intercept: target not bracketed in [-30, 5]");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = mean_at(mid);
    if (std::abs(f_mid - target) <= tol) return mid;
    if (f_mid < target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-12) return 0.5 * (lo + hi);
  }
  return 0.5 * (lo + hi);
}

namespace {

// Evaluation of the arm-specific product-indicator probability at a trial
// intercept, slopes fixed from the spec.
std::function<double(double, std::span<const double>)> gamma_mean_fn(const DgpSpec& spec,
                                                                     int arm) {
  const std::vector<double> slope =
      beta_pattern(spec.d, spec.s_beta, 0.0, arm == 1 ? 1.0 : -1.0);
  switch (spec.dgp) {
    case Dgp::a:
    case Dgp::c:
      return [slope](double b, std::span<const double> x) {
        return logistic(b + kernels::ops().dot(slope.data(), x.data(), x.size()));
      };
    case Dgp::b: {
      const std::vector<double> om = omega_pattern(spec.d, spec.s_beta);
      const bool treated = arm == 1;
      return [slope, om, treated](double b, std::span<const double> x) {
        const double pi = 0.3 * std::sin(kernels::ops().dot(om.data(), x.data(), x.size())) + 0.5;
        const double p = logistic(b + kernels::ops().dot(slope.data(), x.data(), x.size()));
        return (treated ? pi : 1.0 - pi) * p;
      };
    }
    default:
      throw contract_error("calibration applies to DGPs a-c only");
  }
}

}  // namespace

double calibrate_offset(const DgpSpec& spec, int arm, double gamma_target, std::size_t mc_draws,
                        double tol, Rng& rng) {
  if (!(gamma_target > 0.0 && gamma_target <= 0.5))
    throw data_error("calibrate_offset: target must lie in (0, 0.5]");
  if (mc_draws < 100000) throw contract_error("calibrate_offset: need at least 1e5 draws");
  const Matrix draws = gen_covariates(mc_draws, spec.d, rng);
  return calibrate_intercept(draws, gamma_target, tol, gamma_mean_fn(spec, arm));
}

// ---------------------------------------------------------------------------
// oracle assembly and the true ATE
// ---------------------------------------------------------------------------

TruthOracle build_oracle(const DgpSpec& spec) {
  validate_spec(spec);
  TruthOracle o;
  o.dgp = spec.dgp;
  o.d = spec.d;
  switch (spec.dgp) {
    case Dgp::a:
    case Dgp::b:
    case Dgp::c: {
      o.alpha1 = alpha_pattern(spec.d, spec.s_alpha);
      o.alpha0 = o.alpha1;
      for (double& v : o.alpha0) v = -v;
      if (spec.dgp == Dgp::c) {
        o.eta1 = eta_pattern(spec.d, spec.s_alpha);
        o.eta0 = o.eta1;
        for (double& v : o.eta0) v = -v;
      }
      o.omega = omega_pattern(spec.d, spec.s_beta);
      Rng cal1(derive_seed(spec.seed, 0xCA1, 1));
      Rng cal0(derive_seed(spec.seed, 0xCA1, 0));
      const double b1 = calibrate_offset(spec, 1, spec.gamma1, 1000000, 2e-3, cal1);
      const double b0 = calibrate_offset(spec, 0, spec.gamma0, 1000000, 2e-3, cal0);
      o.beta1 = beta_pattern(spec.d, spec.s_beta, b1, 1.0);
      o.beta0 = beta_pattern(spec.d, spec.s_beta, b0, -1.0);
      break;
    }
    case Dgp::d: {
      o.alpha1 = geometric(spec.d, 3.0, 3.0, 0.9);
      o.alpha0 = o.alpha1;
      for (double& v : o.alpha0) v = -v;
      o.beta1 = geometric(spec.d, 0.99, 0.5, 0.7);
      o.beta0 = o.beta1;
      break;
    }
    case Dgp::e: {
      o.alpha1 = geometric(spec.d, 3.0, 3.0, 0.9);
      o.alpha0 = o.alpha1;
      for (double& v : o.alpha0) v = -v;
      o.eta1 = geometric(spec.d, 0.0, 1.0, 0.9);
      o.eta0 = o.eta1;
      for (double& v : o.eta0) v = -v;
      o.beta1 = geometric(spec.d, 0.2247, 1.0, 0.7);
      o.beta0 = o.beta1;
      break;
    }
  }
  o.mu0 = true_ate(spec, o, &o.mu0_se);
  return o;
}

double true_ate(const DgpSpec& spec, const TruthOracle& oracle, double* se_out) {
  if (se_out) *se_out = 0.0;
  // linear parts: non-intercept covariates have mean zero, so only the
  // intercept coefficient survives the expectation
  const double linear = 2.0 * oracle.alpha1[0];
  if (spec.dgp == Dgp::a || spec.dgp == Dgp::b || spec.dgp == Dgp::d) return linear;

  // quadratic parts: coordinates are iid, so E[(x^2)'eta] reduces to the
  // scalar second moment of the truncated normal; simulated with 1e7 draws
  double eta_sum = 0.0;
  for (std::size_t j = 1; j < oracle.eta1.size(); ++j) eta_sum += oracle.eta1[j];
  const std::size_t draws = 10000000;
  Rng rng(derive_seed(spec.seed, 0xA7E));
  double acc = 0.0, acc2 = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double z = rng.truncated_normal(2.0);
    const double z2 = z * z;
    acc += z2;
    acc2 += z2 * z2;
  }
  const double m2 = acc / draws;
  const double var_z2 = acc2 / draws - m2 * m2;
  if (se_out) *se_out = 2.0 * std::abs(eta_sum) * std::sqrt(var_z2 / draws);
  return linear + 2.0 * eta_sum * m2;
}

Dataset gen_dataset(const DgpSpec& spec, const TruthOracle& oracle, Rng& rng,
                    PotentialOutcomes* po) {
  validate_spec(spec);
  Matrix x = gen_covariates(spec.n, spec.d, rng);
  const std::size_t n = spec.n;
  std::vector<std::uint8_t> t(n), r(n);
  std::vector<double> y(n, std::numeric_limits<double>::quiet_NaN());
  if (po) {
    po->y1.resize(n);
    po->y0.resize(n);
  }
  const bool labeled_setting = !fully_labeled(spec.dgp);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row_span(i);
    const double pi = oracle.treat_prob(row);
    if (!(pi > 0.0 && pi < 1.0)) throw numeric_error("gen_dataset: treatment probability not in (0,1)");
    t[i] = rng.bernoulli(pi);
    if (labeled_setting) {
      const double p = oracle.label_prob(t[i], row);
      if (!(p > 0.0 && p < 1.0)) throw numeric_error("gen_dataset: labeling probability not in (0,1)");
      r[i] = rng.bernoulli(p);
    } else {
      r[i] = 1;
    }
    const double noise = rng.normal();
    const double y1 = oracle.m(1, row) + noise;
    const double y0 = oracle.m(0, row) + noise;
    if (po) {
      po->y1[i] = y1;
      po->y0[i] = y0;
    }
    if (r[i]) y[i] = t[i] ? y1 : y0;
  }
  return Dataset(std::move(x), std::move(t), std::move(r), std::move(y));
}

// ---------------------------------------------------------------------------
// replication harness
// ---------------------------------------------------------------------------

EstimatorKind parse_estimator(const std::string& s) {
  if (s == "oracle") return EstimatorKind::oracle;
  if (s == "mcar") return EstimatorKind::mcar;
  if (s == "ss-lasso") return EstimatorKind::ss_lasso;
  if (s == "brss") return EstimatorKind::brss;
  throw data_error("unknown estimator '" + s + "'");
}

std::string estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::oracle: return "oracle";
    case EstimatorKind::mcar: return "mcar";
    case EstimatorKind::ss_lasso: return "ss-lasso";
    case EstimatorKind::brss: return "brss";
  }
  return "?";
}

namespace {

struct RepOutcome {
  bool ok = false;
  double mu = 0.0, sigma = 0.0, lo = 0.0, hi = 0.0;
};

RepOutcome run_one(const Dataset& ds, EstimatorKind kind, const TruthOracle& oracle,
                   std::uint64_t seed, const RunConfig& cfg) {
  RepOutcome out;
  AteReport rep;
  switch (kind) {
    case EstimatorKind::oracle: {
      nuisance::LearnerSpec spec;
      spec.or_method = nuisance::OrMethod::oracle;
      spec.ps_method = nuisance::PsMethod::oracle;
      spec.oracle = &oracle;
      rep = estimators::dr_dmar_ate(ds, cfg.k_folds, spec, seed, cfg.n_repeats, cfg.ci_level);
      break;
    }
    case EstimatorKind::mcar: {
      nuisance::LearnerSpec spec;
      spec.or_method = nuisance::OrMethod::lasso_linear;
      spec.ps_method = nuisance::PsMethod::constant_mcar;
      spec.cv_folds = cfg.cv_folds;
      rep = estimators::dr_dmar_ate(ds, cfg.k_folds, spec, seed, cfg.n_repeats, cfg.ci_level);
      break;
    }
    case EstimatorKind::ss_lasso: {
      nuisance::LearnerSpec spec;
      spec.or_method = nuisance::OrMethod::lasso_linear;
      spec.ps_method = nuisance::PsMethod::offset_logistic_direct;
      spec.cv_folds = cfg.cv_folds;
      rep = estimators::dr_dmar_ate(ds, cfg.k_folds, spec, seed, cfg.n_repeats, cfg.ci_level);
      break;
    }
    case EstimatorKind::brss: {
      estimators::BrssOptions opt;
      opt.cv_folds = cfg.cv_folds;
      rep = estimators::brss_ate(ds, seed, opt, cfg.ci_level);
      break;
    }
  }
  out.ok = true;
  out.mu = rep.mu_hat;
  out.sigma = rep.sigma_hat;
  out.lo = rep.ci.lo;
  out.hi = rep.ci.hi;
  return out;
}

}  // namespace

MetricsTable run_replications(const DgpSpec& spec, std::span<const EstimatorKind> estimators,
                              int n_reps, std::uint64_t base_seed, int workers,
                              const RunConfig& cfg) {
  if (n_reps < 1) throw contract_error("run_replications: n_reps must be >= 1");
  if (estimators.empty()) throw contract_error("run_replications: no estimators");
  const TruthOracle oracle = build_oracle(spec);

  const std::size_t n_est = estimators.size();
  std::vector<std::vector<RepOutcome>> results(
      static_cast<std::size_t>(n_reps), std::vector<RepOutcome>(n_est));

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= n_reps) return;
      Rng data_rng(base_seed + static_cast<std::uint64_t>(r));
      Dataset ds;
      bool data_ok = true;
      try {
        ds = gen_dataset(spec, oracle, data_rng);
      } catch (const std::exception&) {
        data_ok = false;
      }
      for (std::size_t e = 0; e < n_est; ++e) {
        if (!data_ok) continue;
        const std::uint64_t seed =
            derive_seed(base_seed, 0xE57, static_cast<std::uint64_t>(r) * 16 + e);
        try {
          results[r][e] = run_one(ds, estimators[e], oracle, seed, cfg);
        } catch (const std::exception&) {
          results[r][e].ok = false;
        }
      }
    }
  };

  const int pool = std::max(1, std::min(workers, n_reps));
  std::vector<std::thread> threads;
  threads.reserve(pool);
  for (int w = 0; w < pool; ++w) threads.emplace_back(worker);
  for (auto& th : threads) th.join();

  MetricsTable table;
  table.n_reps = n_reps;
  table.mu0 = oracle.mu0;
  table.mu0_se = oracle.mu0_se;
  for (std::size_t e = 0; e < n_est; ++e) {
    MetricsRow row;
    row.estimator = estimator_name(estimators[e]);
    std::vector<double> mu, err, err2, len, asd;
    int covered = 0;
    for (int r = 0; r < n_reps; ++r) {
      const RepOutcome& o = results[r][e];
      if (!o.ok) {
        ++row.n_fail;
        continue;
      }
      mu.push_back(o.mu);
      err.push_back(o.mu - oracle.mu0);
      err2.push_back((o.mu - oracle.mu0) * (o.mu - oracle.mu0));
      len.push_back(o.hi - o.lo);
      asd.push_back(std::sqrt(o.sigma / static_cast<double>(spec.n)));
      if (o.lo <= oracle.mu0 && oracle.mu0 <= o.hi) ++covered;
    }
    if (mu.empty()) {
      row.bias = row.rmse = row.length = row.coverage = row.esd = row.asd =
          std::numeric_limits<double>::quiet_NaN();
      table.valid = false;
    } else {
      row.bias = median(err);
      row.rmse = std::sqrt(median(err2));
      row.length = median(len);
      row.coverage = static_cast<double>(covered) / static_cast<double>(mu.size());
      row.esd = mad_scale(mu);
      row.asd = median(asd);
      if (static_cast<double>(row.n_fail) >= 0.02 * static_cast<double>(n_reps))
        table.valid = false;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace dmar::simulate
