#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmar/dataset.hpp"
#include "dmar/nuisance.hpp"
#include "dmar/report.hpp"

namespace dmar::estimators {

// Normal-quantile interval: estimate +/- z_{(1+level)/2} * sqrt(sigma_hat/n).
Interval ci_from(double estimate, double sigma_hat, std::size_t n, double level);

// Plug-in counterfactual-mean arithmetic on given per-sample nuisance values:
//   theta = mean_i [ m_i + gamma_i / g_i * (y_i - m_i) ],
// influence values are the bracketed terms centered at theta. y is read only
// where gamma_i = 1. Exposed separately so fixed-nuisance checks can drive it
// directly.
struct DrCore {
  double theta = 0.0;
  std::vector<double> influence;
};
DrCore dr_core(std::span<const double> m_values, std::span<const double> ps_values,
               std::span<const std::uint8_t> gamma, const Dataset& ds);

// Per-sample cross-fitted nuisance evaluations, captured for diagnostics and
// for the cross-fitting dependence tests.
struct CrossFitValues {
  std::vector<double> m_values;   // m-tilde at each sample
  std::vector<double> ps_values;  // gamma-tilde at each sample
  long long clip_events = 0;
  long long solver_clamps = 0;
};

// Cross-fitted doubly robust estimate of one counterfactual mean: for each
// fold, nuisances are fitted on the fold's complement and evaluated on the
// fold.
ArmEstimate dr_dmar_arm(const Dataset& ds, int arm, const FoldAssignment& folds,
                        const nuisance::LearnerSpec& learner, CrossFitValues* captured = nullptr);

// Cross-fitted doubly robust ATE with the joint plug-in variance. When
// n_repeats > 1 the whole procedure runs on fresh fold splits and point and
// variance estimates are averaged separately.
AteReport dr_dmar_ate(const Dataset& ds, int k_folds, const nuisance::LearnerSpec& learner,
                      std::uint64_t seed, int n_repeats = 1, double ci_level = 0.95);

struct BrssOptions {
  nuisance::LambdaPolicy lambda_policy;
  int cv_folds = 5;
  solvers::SolverConfig solver;
};

// Captured internals of one bias-reduced arm fit (dependence tests, variance
// assembly, diagnostics).
struct BrssValues {
  std::vector<std::size_t> half[2];
  double gamma_hat[2] = {0.0, 0.0};
  std::vector<double> beta_hat[2];
  std::vector<double> alpha_hat[2];
  std::vector<double> or_values;  // x'alpha from the opposite half, per sample
  std::vector<double> ps_values;  // logistic(x'beta + log gamma_hat), own half
  std::vector<double> ps_bar;     // propensity at averaged coefficients
  std::vector<double> or_bar;     // regression at averaged coefficients
  long long clip_events = 0;
  long long solver_clamps = 0;
  bool degraded = false;
};

// Bias-reduced counterfactual mean with targeted nuisance fits and asymmetric
// cross-fitting: regression coefficients come from the opposite half,
// propensity coefficients from the sample's own half. The per-arm variance is
// evaluated at the averaged coefficients over all samples.
ArmEstimate brss_arm(const Dataset& ds, int arm, std::uint64_t seed, const BrssOptions& opt,
                     BrssValues* captured = nullptr);

// Bias-reduced ATE: both arms share the same half split; the variance uses
// the joint influence expression at the averaged coefficients.
AteReport brss_ate(const Dataset& ds, std::uint64_t seed, const BrssOptions& opt,
                   double ci_level = 0.95);

}  // namespace dmar::estimators
