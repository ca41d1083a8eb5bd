#pragma once

#include <cstdint>
#include <vector>

namespace dmar {

// One counterfactual-mean estimate with its plug-in influence values.
// Influence values are centered at zero by construction, so theta_hat equals
// the mean of (influence + theta_hat).
struct ArmEstimate {
  int arm = 1;
  double theta_hat = 0.0;
  std::vector<double> influence;
  double sigma_hat = 0.0;  // per-arm plug-in asymptotic variance
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct Diagnostics {
  double gamma_bar_1 = 0.0;  // empirical mean of the arm-1 product indicator
  double gamma_bar_0 = 0.0;
  double a_hat_1 = 0.0;  // plug-in effective overlap per arm
  double a_hat_0 = 0.0;
  double effective_sample_size = 0.0;  // N * min(a_hat)
  long long ps_clip_events = 0;        // propensity floor activations
  long long solver_clamp_events = 0;   // exponent clamps inside the tilted fits
  bool degraded = false;               // a converged fit clamped at least once
};

struct AteReport {
  double mu_hat = 0.0;
  double sigma_hat = 0.0;
  double ci_level = 0.95;
  Interval ci;
  ArmEstimate arm1;
  ArmEstimate arm0;
  Diagnostics diagnostics;
  std::size_t n = 0;
  int n_repeats = 1;
};

}  // namespace dmar
