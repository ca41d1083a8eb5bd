#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dmar/dataset.hpp"
#include "dmar/nuisance.hpp"
#include "dmar/rng.hpp"

namespace dmar::simulate {

// Generating processes. a: linear regressions, logistic product propensities;
// b: linear regressions, non-logistic propensities; c: quadratic regressions,
// logistic propensities; d/e: fully labeled variants with weakly sparse
// geometric-decay parameters (d non-logistic treatment model, e quadratic
// regressions).
enum class Dgp { a, b, c, d, e };

Dgp parse_dgp(const std::string& s);  // throws data_error on unknown names
std::string dgp_name(Dgp dgp);

struct DgpSpec {
  Dgp dgp = Dgp::a;
  std::size_t n = 10000;
  std::size_t d = 51;
  int s_alpha = 3;
  int s_beta = 3;
  double gamma1 = 0.1;  // target mean of the arm-1 product indicator (a-c)
  double gamma0 = 0.1;
  std::uint64_t seed = 0;
};

void validate_spec(const DgpSpec& spec);

// Analytic truth for one calibrated spec: regression functions, product
// propensities, treatment and labeling probabilities, and the true ATE.
class TruthOracle final : public nuisance::TruthFunctions {
 public:
  Dgp dgp = Dgp::a;
  std::size_t d = 0;
  std::vector<double> alpha1, alpha0;  // regression slopes per arm
  std::vector<double> eta1, eta0;      // quadratic parts (c, e)
  std::vector<double> beta1, beta0;    // propensity slopes, calibrated intercept in slot 0
  std::vector<double> omega;           // sine direction (b)
  double mu0 = 0.0;                    // true ATE
  double mu0_se = 0.0;                 // Monte Carlo SE when mu0 is simulated

  double m(int arm, std::span<const double> x) const override;
  double product_ps(int arm, std::span<const double> x) const override;
  double treat_prob(std::span<const double> x) const;      // P(T=1 | x)
  double label_prob(int t, std::span<const double> x) const;  // P(R=1 | T=t, x)
};

// Covariates: column 1 constant one, the rest iid standard normal draws
// conditioned on |Z| < 2 (rejection sampled).
Matrix gen_covariates(std::size_t n, std::size_t d, Rng& rng);

// Variance of the |Z|<2 truncated standard normal.
double truncated_normal_variance();

// Bisection on a scalar intercept so that a Monte Carlo mean hits the target
// within tol, using one fixed covariate sample across all bisection steps.
// fn(intercept, row) must be increasing in the intercept.
double calibrate_intercept(
    const Matrix& draws, double target, double tol,
    const std::function<double(double, std::span<const double>)>& fn);

// Calibrates the propensity intercept of one arm of a spec.
double calibrate_offset(const DgpSpec& spec, int arm, double gamma_target, std::size_t mc_draws,
                        double tol, Rng& rng);

// Builds parameter vectors, calibrates intercepts (a-c) and evaluates the
// true ATE. Deterministic given the spec.
TruthOracle build_oracle(const DgpSpec& spec);

double true_ate(const DgpSpec& spec, const TruthOracle& oracle, double* se_out = nullptr);

// Potential outcomes kept aside for tests.
struct PotentialOutcomes {
  std::vector<double> y1, y0;
};

Dataset gen_dataset(const DgpSpec& spec, const TruthOracle& oracle, Rng& rng,
                    PotentialOutcomes* po = nullptr);

// ---- replication harness ----------------------------------------------------

enum class EstimatorKind { oracle, mcar, ss_lasso, brss };

EstimatorKind parse_estimator(const std::string& s);
std::string estimator_name(EstimatorKind k);

struct RunConfig {
  int k_folds = 2;
  int n_repeats = 1;  // cross-fit replications inside the general estimator
  int cv_folds = 5;
  double ci_level = 0.95;
};

struct MetricsRow {
  std::string estimator;
  double bias = 0.0;      // median of (mu_hat - mu0)
  double rmse = 0.0;      // sqrt of median squared error
  double length = 0.0;    // median CI length
  double coverage = 0.0;  // fraction of CIs containing mu0
  double esd = 0.0;       // 1.4826 * MAD of the estimates
  double asd = 0.0;       // median of sqrt(sigma_hat / n)
  int n_fail = 0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  int n_reps = 0;
  double mu0 = 0.0;
  double mu0_se = 0.0;
  bool valid = true;  // every estimator failed on < 2% of replications
};

// Runs n_reps independent datasets through the configured estimators on a
// worker pool. Every stream is derived from (base_seed, replication), so the
// table is invariant to the worker count.
MetricsTable run_replications(const DgpSpec& spec, std::span<const EstimatorKind> estimators,
                              int n_reps, std::uint64_t base_seed, int workers,
                              const RunConfig& cfg = {});

}  // namespace dmar::simulate
