#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmar/dataset.hpp"
#include "dmar/solvers.hpp"

namespace dmar::nuisance {

// Analytic truth functions, available in simulation only. The simulation
// module implements this for each generating process.
struct TruthFunctions {
  virtual ~TruthFunctions() = default;
  virtual double m(int arm, std::span<const double> x) const = 0;
  virtual double product_ps(int arm, std::span<const double> x) const = 0;
};

enum class OrMethod { lasso_linear, oracle, zero };
enum class PsMethod { offset_logistic_direct, product_two_logistic, constant_mcar, oracle };

struct LambdaPolicy {
  bool cv = true;
  double fixed_or = 0.0;
  double fixed_ps = 0.0;
  static LambdaPolicy fixed(double lambda_or, double lambda_ps) {
    return LambdaPolicy{false, lambda_or, lambda_ps};
  }
};

struct LearnerSpec {
  OrMethod or_method = OrMethod::lasso_linear;
  PsMethod ps_method = PsMethod::offset_logistic_direct;
  LambdaPolicy lambda_policy;
  int cv_folds = 5;
  std::uint64_t cv_seed = 0;                    // base for CV fold streams
  const TruthFunctions* oracle = nullptr;       // required by the oracle methods
};

// A fitted (outcome regression, product propensity) pair for one arm. The
// propensity evaluator clips into (eps_floor, 1] with eps_floor = 1/(2N) and
// counts every activation; functions are pure apart from that counter, so
// estimates are safe to share across threads.
struct NuisanceEstimate {
  int arm = 1;
  std::function<double(std::span<const double>)> or_fn;
  std::function<double(std::span<const double>)> ps_fn;
  std::string method_tag;
  std::optional<std::vector<double>> or_coef;
  std::optional<std::vector<double>> ps_coef;
  std::optional<std::vector<double>> ps_coef2;  // treatment component of product fits
  std::optional<double> lambda_or;
  std::optional<double> lambda_ps;
  std::optional<double> lambda_ps2;
  std::shared_ptr<std::atomic<long long>> clip_events;
  long long solver_clamps = 0;
  bool degraded = false;
};

struct FitContext {
  LambdaPolicy policy;
  int cv_folds = 5;
  std::uint64_t seed = 0;
  solvers::SolverConfig solver;
};

// Fits one penalized problem under a lambda policy. Under cv, the lambda is
// chosen over the default geometric grid by stratified cross-validation, the
// path is then re-run on the full slice at a relaxed tolerance down to the
// chosen point, and a final warm-started fit applies the caller's tolerance.
// Under a fixed policy the problem is solved directly at fixed_lambda.
solvers::SolverResult fit_with_policy(const solvers::CvProblem& prob, const FitContext& ctx,
                                      double fixed_lambda, std::uint64_t salt,
                                      std::optional<double>* lambda_out);

// Lasso outcome regression on the rows with product indicator 1 (unit
// weights); returns x -> x'alpha_hat.
NuisanceEstimate fit_or_lasso(const Dataset& ds, int arm,
                              std::span<const std::size_t> train_indices, const FitContext& ctx);

// Direct product-propensity fit: gamma_hat = mean of the product indicator on
// the slice, slope from the offset logistic fit, evaluator
// x -> logistic(x'beta_hat + log gamma_hat) clipped.
NuisanceEstimate fit_ps_offset_logistic(const Dataset& ds, int arm,
                                        std::span<const std::size_t> train_indices,
                                        const FitContext& ctx);

// Two-piece product fit: offset logistic for the labeling probability on the
// whole slice times a plain l1-logistic treatment model fitted on the labeled
// rows; arm 0 uses the binary complement of the treatment component.
NuisanceEstimate fit_ps_product(const Dataset& ds, int arm,
                                std::span<const std::size_t> train_indices,
                                const FitContext& ctx);

// Baseline that ignores labeling selection: mean labeling rate times an
// l1-logistic treatment model fitted on the whole slice.
NuisanceEstimate fit_ps_constant_mcar(const Dataset& ds, int arm,
                                      std::span<const std::size_t> train_indices,
                                      const FitContext& ctx);

// Wraps the analytic truth functions (simulation only).
NuisanceEstimate oracle_nuisance(const TruthFunctions& truth, int arm, std::size_t n_for_floor);

// Fits the (or, ps) pair selected by the spec for one training slice.
struct NuisancePair {
  NuisanceEstimate or_est;
  NuisanceEstimate ps_est;
};
NuisancePair fit_pair(const Dataset& ds, int arm, std::span<const std::size_t> train_indices,
                      const LearnerSpec& spec, std::uint64_t seed_salt);

}  // namespace dmar::nuisance
