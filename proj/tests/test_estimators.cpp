#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dmar/estimators.hpp"
#include "dmar/simulate.hpp"
#include "dmar/stats.hpp"

using namespace dmar;
using namespace dmar::estimators;

namespace {

Dataset realistic_draw(std::uint64_t seed, std::size_t n = 1200, std::size_t d = 9,
                       double gamma = 0.15, simulate::Dgp dgp = simulate::Dgp::a,
                       simulate::TruthOracle* truth_out = nullptr) {
  simulate::DgpSpec spec;
  spec.dgp = dgp;
  spec.n = n;
  spec.d = d;
  spec.s_alpha = 3;
  spec.s_beta = 3;
  spec.gamma1 = spec.gamma0 = gamma;
  spec.seed = seed;
  const auto truth = simulate::build_oracle(spec);
  if (truth_out) *truth_out = truth;
  Rng rng(derive_seed(seed, 0xDA7A));
  return simulate::gen_dataset(spec, truth, rng);
}

Dataset with_poisoned_outcomes(const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<double> y = ds.outcome_raw();
  for (std::size_t i : rows)
    if (ds.effective_label(i)) y[i] += 10.0;
  return Dataset(ds.covariates(), ds.treatment_raw(), ds.outcome_label(), std::move(y),
                 ds.treatment_label());
}

nuisance::LearnerSpec lasso_learner(std::uint64_t cv_seed = 0) {
  nuisance::LearnerSpec spec;
  spec.or_method = nuisance::OrMethod::lasso_linear;
  spec.ps_method = nuisance::PsMethod::offset_logistic_direct;
  spec.cv_seed = cv_seed;
  return spec;
}

}  // namespace

TEST_CASE("ci_from matches the quantile table") {
  const auto ci95 = ci_from(0.0, 1.0, 100, 0.95);
  CHECK(ci95.hi == doctest::Approx(0.19600).epsilon(1e-4));
  CHECK(ci95.lo == doctest::Approx(-0.19600).epsilon(1e-4));
  const auto degenerate = ci_from(2.0, 0.0, 50, 0.95);
  CHECK(degenerate.lo == 2.0);
  CHECK(degenerate.hi == 2.0);
  const auto ci90 = ci_from(0.0, 1.0, 100, 0.90);
  CHECK(ci90.hi == doctest::Approx(0.1644854).epsilon(1e-5));
  CHECK_THROWS_AS(ci_from(0.0, 1.0, 100, 1.2), contract_error);
}

TEST_CASE("dr core: hand-checked four-sample instance") {
  // m = (1,2,0,1), g = (1/2,1/2,1/4,1/4), gamma = (1,0,1,0), y = (3,.,1,.)
  Matrix x(4, 1);
  for (int i = 0; i < 4; ++i) x.at(i, 0) = 1.0;
  std::vector<std::uint8_t> t{1, 0, 1, 0}, r{1, 0, 1, 0};
  std::vector<double> y{3.0, std::nan(""), 1.0, std::nan("")};
  Dataset ds(std::move(x), std::move(t), std::move(r), std::move(y));
  const std::vector<double> m{1.0, 2.0, 0.0, 1.0};
  const std::vector<double> g{0.5, 0.5, 0.25, 0.25};
  const std::vector<std::uint8_t> gamma{1, 0, 1, 0};
  const auto core = dr_core(m, g, gamma, ds);
  // terms: 1 + 2*(3-1) = 5, 2, 0 + 4*(1-0) = 4, 1 -> mean 3
  CHECK(core.theta == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(core.influence[0] == doctest::Approx(2.0));
  CHECK(core.influence[1] == doctest::Approx(-1.0));
  CHECK(core.influence[2] == doctest::Approx(1.0));
  CHECK(core.influence[3] == doctest::Approx(-2.0));
}

TEST_CASE("dr core: degenerate supervised identity") {
  // R = T = 1 everywhere, m = 0, g = 1: theta reduces to the sample mean
  const std::size_t n = 37;
  Matrix x(n, 1);
  std::vector<std::uint8_t> t(n, 1), r(n, 1);
  std::vector<double> y(n);
  Rng rng(3);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x.at(i, 0) = 1.0;
    mean += (y[i] = rng.normal());
  }
  mean /= n;
  Dataset ds(std::move(x), std::move(t), std::move(r), std::move(y));
  const std::vector<double> m(n, 0.0), g(n, 1.0);
  const std::vector<std::uint8_t> gamma(n, 1);
  const auto core = dr_core(m, g, gamma, ds);
  CHECK(core.theta == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("dr collapses to ipw with a zero regression plug-in") {
  simulate::TruthOracle truth;
  Dataset ds = realistic_draw(101, 900, 7, 0.2, simulate::Dgp::a, &truth);
  const FoldAssignment folds = make_folds(ds.n(), 2, 5);
  nuisance::LearnerSpec spec;
  spec.or_method = nuisance::OrMethod::zero;
  spec.ps_method = nuisance::PsMethod::oracle;
  spec.oracle = &truth;
  CrossFitValues values;
  const auto arm = dr_dmar_arm(ds, 1, folds, spec, &values);
  const auto pi = build_product_indicator(ds, 1);
  double ipw = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i)
    if (pi.gamma[i]) ipw += ds.outcome_at(i) / values.ps_values[i];
  ipw /= double(ds.n());
  CHECK(arm.theta_hat == doctest::Approx(ipw).epsilon(1e-12));
}

TEST_CASE("dr collapses to the regression-imputation estimator when weights cancel") {
  // gamma-tilde = 1 on labeled-armed rows and a regression that interpolates:
  // the correction term vanishes and theta is the mean regression value
  const std::size_t n = 50;
  Matrix x(n, 2);
  std::vector<std::uint8_t> t(n), r(n, 1);
  std::vector<double> y(n);
  Rng rng(4);
  for (std::size_t i = 0; i < n; ++i) {
    x.at(i, 0) = 1.0;
    x.at(i, 1) = rng.normal();
    t[i] = rng.bernoulli(0.5);
    y[i] = 2.0 + 3.0 * x.at(i, 1);
  }
  Dataset ds(x, t, r, y);
  const auto pi = build_product_indicator(ds, 1);
  std::vector<double> m(n), g(n, 1.0);
  double reg_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) reg_mean += (m[i] = 2.0 + 3.0 * x.at(i, 1));
  reg_mean /= n;
  const auto core = dr_core(m, g, pi.gamma, ds);
  CHECK(core.theta == doctest::Approx(reg_mean).epsilon(1e-14));
}

TEST_CASE("oracle plug-in identity and independent variance recomputation") {
  simulate::TruthOracle truth;
  Dataset ds = realistic_draw(7, 2500, 9, 0.15, simulate::Dgp::a, &truth);
  nuisance::LearnerSpec spec;
  spec.or_method = nuisance::OrMethod::oracle;
  spec.ps_method = nuisance::PsMethod::oracle;
  spec.oracle = &truth;
  const AteReport report = dr_dmar_ate(ds, 2, spec, 11, 1);

  // the estimate equals mu0 + mean(psi) exactly, with psi evaluated through
  // the same oracle evaluation path
  const auto est1 = nuisance::oracle_nuisance(truth, 1, ds.n());
  const auto est0 = nuisance::oracle_nuisance(truth, 0, ds.n());
  const auto g1 = build_product_indicator(ds, 1);
  const auto g0 = build_product_indicator(ds, 0);
  double psi_mean = 0.0, var = 0.0;
  std::vector<double> psi(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto row = ds.row(i);
    double term1 = est1.or_fn(row);
    if (g1.gamma[i]) term1 += (ds.outcome_at(i) - term1) / est1.ps_fn(row);
    double term0 = est0.or_fn(row);
    if (g0.gamma[i]) term0 += (ds.outcome_at(i) - est0.or_fn(row)) / est0.ps_fn(row);
    psi[i] = term1 - term0 - truth.mu0;
    psi_mean += psi[i];
  }
  psi_mean /= double(ds.n());
  CHECK(std::abs(report.mu_hat - (truth.mu0 + psi_mean)) <= 1e-10);

  // variance: the report must equal the plain mean of squared centered
  // influence values recomputed here
  for (std::size_t i = 0; i < ds.n(); ++i)
    var += (psi[i] - psi_mean) * (psi[i] - psi_mean);
  var /= double(ds.n());
  CHECK(std::abs(report.sigma_hat - var) <= 1e-10 * var);
}

TEST_CASE("report consistency: ate equals the arm difference, influence centered") {
  simulate::TruthOracle truth;
  Dataset ds = realistic_draw(13, 1500, 9, 0.2, simulate::Dgp::a, &truth);
  const AteReport report = dr_dmar_ate(ds, 2, lasso_learner(21), 23, 1);
  CHECK(report.mu_hat == doctest::Approx(report.arm1.theta_hat - report.arm0.theta_hat)
                             .epsilon(1e-15));
  double m1 = 0.0, m0 = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    m1 += report.arm1.influence[i];
    m0 += report.arm0.influence[i];
  }
  CHECK(std::abs(m1 / double(ds.n())) <= 1e-10);
  CHECK(std::abs(m0 / double(ds.n())) <= 1e-10);
  // half-width consistency
  const double half = norm_quantile(0.5 * (1.0 + report.ci_level)) *
                      std::sqrt(report.sigma_hat / double(ds.n()));
  CHECK(std::abs((report.ci.hi - report.ci.lo) / 2.0 - half) <= 1e-12 * std::max(1.0, half));
  CHECK(report.sigma_hat > 0.0);
}

TEST_CASE("empty-arm fold raises a data error") {
  // all arm-1 labeled rows inside one fold, so its complement has none
  const std::size_t n = 12;
  Matrix x(n, 2);
  std::vector<std::uint8_t> t(n, 0), r(n, 0);
  std::vector<double> y(n, std::numeric_limits<double>::quiet_NaN());
  Rng rng(5);
  for (std::size_t i = 0; i < n; ++i) {
    x.at(i, 0) = 1.0;
    x.at(i, 1) = rng.normal();
  }
  t[0] = 1;
  r[0] = 1;
  y[0] = 1.0;  // the single labeled-and-treated sample
  for (std::size_t i = 1; i < 6; ++i) {
    t[i] = 0;
    r[i] = 1;
    y[i] = 0.5;
  }
  Dataset ds(std::move(x), std::move(t), std::move(r), std::move(y));
  // find a fold assignment that isolates row 0, then the complement check fires
  bool raised = false;
  for (std::uint64_t seed = 0; seed < 50 && !raised; ++seed) {
    const auto folds = make_folds(n, 2, seed);
    try {
      dr_dmar_arm(ds, 1, folds, lasso_learner(), nullptr);
    } catch (const data_error& e) {
      if (std::string(e.what()).find("empty-arm fold") != std::string::npos) raised = true;
    } catch (const std::exception&) {
    }
  }
  CHECK(raised);
}

TEST_CASE("cross-fitting independence: poisoning a fold leaves its evaluations unchanged") {
  simulate::TruthOracle truth;
  Dataset ds = realistic_draw(31, 1000, 7, 0.2, simulate::Dgp::a, &truth);
  const FoldAssignment folds = make_folds(ds.n(), 2, 77);
  const auto learner = lasso_learner(55);

  CrossFitValues base1, base0;
  dr_dmar_arm(ds, 1, folds, learner, &base1);
  dr_dmar_arm(ds, 0, folds, learner, &base0);

  for (int k = 0; k < 2; ++k) {
    const auto fold_rows = folds.in_fold(k);
    Dataset poisoned = with_poisoned_outcomes(ds, fold_rows);
    CrossFitValues p1, p0;
    dr_dmar_arm(poisoned, 1, folds, learner, &p1);
    dr_dmar_arm(poisoned, 0, folds, learner, &p0);
    bool other_changed = false;
    for (std::size_t i = 0; i < ds.n(); ++i) {
      if (folds.fold[i] == k) {
        // evaluations on the poisoned fold come from fits on the other folds
        CHECK(p1.m_values[i] == base1.m_values[i]);
        CHECK(p1.ps_values[i] == base1.ps_values[i]);
        CHECK(p0.m_values[i] == base0.m_values[i]);
        CHECK(p0.ps_values[i] == base0.ps_values[i]);
      } else if (p1.m_values[i] != base1.m_values[i]) {
        other_changed = true;
      }
    }
    CHECK(other_changed);  // the poison did reach the complementary fits
  }
}

TEST_CASE("brss asymmetric cross-fitting dependence pattern") {
  simulate::TruthOracle truth;
  Dataset ds = realistic_draw(41, 1400, 7, 0.25, simulate::Dgp::a, &truth);
  BrssOptions opt;
  const std::uint64_t seed = 91;
  BrssValues base;
  brss_arm(ds, 1, seed, opt, &base);

  for (int k = 0; k < 2; ++k) {
    // poison the outcomes of half k
    Dataset poisoned = with_poisoned_outcomes(ds, base.half[k]);
    BrssValues pois;
    brss_arm(poisoned, 1, seed, opt, &pois);
    bool or_moved_somewhere = false;
    for (std::size_t i = 0; i < ds.n(); ++i) {
      const bool in_k = std::find(base.half[k].begin(), base.half[k].end(), i) !=
                        base.half[k].end();
      if (in_k) {
        // regression values on half k come from the opposite half only
        CHECK(pois.or_values[i] == base.or_values[i]);
      } else if (pois.or_values[i] != base.or_values[i]) {
        or_moved_somewhere = true;
      }
      // propensity values never depend on outcomes anywhere
      CHECK(pois.ps_values[i] == base.ps_values[i]);
    }
    CHECK(or_moved_somewhere);

    // scramble everything in half k: propensities on the other half are
    // functions of their own half only
    {
      Matrix x = ds.covariates();
      std::vector<double> y = ds.outcome_raw();
      std::vector<std::uint8_t> t = ds.treatment_raw();
      Rng rng(derive_seed(seed, k));
      for (std::size_t i : base.half[k]) {
        for (std::size_t j = 1; j < ds.dim(); ++j) x.at(i, j) += rng.normal();
        if (ds.effective_label(i)) y[i] += rng.normal();
      }
      Dataset scrambled(std::move(x), std::move(t), ds.outcome_label(), std::move(y));
      BrssValues sc;
      brss_arm(scrambled, 1, seed, opt, &sc);
      const int other = 1 - k;
      CHECK(sc.gamma_hat[other] == base.gamma_hat[other]);
      for (std::size_t j = 0; j < ds.dim(); ++j)
        CHECK(sc.beta_hat[other][j] == base.beta_hat[other][j]);
      for (std::size_t i : base.half[other])
        CHECK(sc.ps_values[i] == base.ps_values[i]);
    }
  }
}

TEST_CASE("brss half-label symmetry") {
  // swapping which half is called 1 or 2 must not move the estimate: check by
  // verifying the two half estimates average symmetrically
  simulate::TruthOracle truth;
  Dataset ds = realistic_draw(51, 1000, 7, 0.25, simulate::Dgp::a, &truth);
  BrssOptions opt;
  BrssValues v;
  const auto est = brss_arm(ds, 1, 17, opt, &v);
  // recompute the two half means directly and average them in both orders
  const auto pi = build_product_indicator(ds, 1);
  double th[2];
  for (int k = 0; k < 2; ++k) {
    double acc = 0.0;
    for (std::size_t i : v.half[k]) {
      double term = v.or_values[i];
      if (pi.gamma[i]) term += (ds.outcome_at(i) - v.or_values[i]) / v.ps_values[i];
      acc += term;
    }
    th[k] = acc / double(v.half[k].size());
  }
  CHECK(est.theta_hat == doctest::Approx(0.5 * (th[0] + th[1])).epsilon(1e-14));
  CHECK(est.theta_hat == doctest::Approx(0.5 * (th[1] + th[0])).epsilon(1e-14));
}

TEST_CASE("brss supervised exact interpolation identity") {
  // fully labeled, noiseless linear outcome, lambdas fixed to zero: the
  // opposite-half regression interpolates, the correction vanishes, and the
  // estimate is exactly the sample mean of y
  const std::size_t n = 400, d = 4;
  Rng rng(6);
  Matrix x = simulate::gen_covariates(n, d, rng);
  std::vector<std::uint8_t> t(n), r(n, 1);
  std::vector<double> y(n);
  const std::vector<double> alpha0{1.0, -0.5, 0.25, 2.0};
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = rng.bernoulli(0.5);
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += alpha0[j] * x.at(i, j);
    y[i] = v;
  }
  // make treated outcomes the interpolable ones for arm 1
  double mean_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_y += y[i];
  mean_y /= n;
  Dataset ds(std::move(x), std::move(t), std::move(r), std::move(y));
  BrssOptions opt;
  opt.lambda_policy = nuisance::LambdaPolicy::fixed(0.0, 0.0);
  const auto est = brss_arm(ds, 1, 3, opt);
  CHECK(est.theta_hat == doctest::Approx(mean_y).epsilon(1e-9));
}

TEST_CASE("brss ate: variance positive, arms consistent, ci wraps the point") {
  simulate::TruthOracle truth;
  Dataset ds = realistic_draw(61, 1600, 9, 0.2, simulate::Dgp::a, &truth);
  BrssOptions opt;
  const AteReport report = brss_ate(ds, 29, opt);
  CHECK(report.sigma_hat > 0.0);
  CHECK(report.mu_hat ==
        doctest::Approx(report.arm1.theta_hat - report.arm0.theta_hat).epsilon(1e-15));
  CHECK(report.ci.lo <= report.mu_hat);
  CHECK(report.ci.hi >= report.mu_hat);
  CHECK(report.diagnostics.effective_sample_size > 0.0);
  CHECK(report.diagnostics.gamma_bar_1 > 0.0);
}

TEST_CASE("brss: degenerate half raises") {
  const std::size_t n = 30;
  Matrix x(n, 2);
  std::vector<std::uint8_t> t(n, 1), r(n, 1);  // every sample treated and labeled
  std::vector<double> y(n, 1.0);
  Rng rng(8);
  for (std::size_t i = 0; i < n; ++i) {
    x.at(i, 0) = 1.0;
    x.at(i, 1) = rng.normal();
  }
  Dataset ds(std::move(x), std::move(t), std::move(r), std::move(y));
  BrssOptions opt;
  CHECK_THROWS_AS(brss_arm(ds, 1, 1, opt), data_error);
}

TEST_CASE("cross-fit repeats average point and variance estimates") {
  simulate::TruthOracle truth;
  Dataset ds = realistic_draw(71, 900, 7, 0.25, simulate::Dgp::a, &truth);
  nuisance::LearnerSpec spec;
  spec.or_method = nuisance::OrMethod::oracle;
  spec.ps_method = nuisance::PsMethod::oracle;
  spec.oracle = &truth;
  // oracle nuisances do not depend on the fold split, so repeats average
  // identical values and must reproduce the single-run estimate
  const AteReport once = dr_dmar_ate(ds, 2, spec, 5, 1);
  const AteReport thrice = dr_dmar_ate(ds, 2, spec, 5, 3);
  CHECK(once.mu_hat == doctest::Approx(thrice.mu_hat).epsilon(1e-13));
  CHECK(once.sigma_hat == doctest::Approx(thrice.sigma_hat).epsilon(1e-13));
  CHECK(thrice.n_repeats == 3);
}
