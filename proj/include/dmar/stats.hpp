#pragma once

#include <span>
#include <vector>

namespace dmar {

// Standard normal CDF and quantile. The quantile is Acklam's rational
// approximation polished with two Newton steps, accurate to ~1e-15.
double norm_cdf(double x);
double norm_quantile(double p);

// Median with the even-count mean-of-middle-two convention (pinned so that
// summary tables are reproducible bit for bit).
double median(std::span<const double> xs);

// 1.4826 * median(|x - median(x)|), the normal-consistent MAD scale.
double mad_scale(std::span<const double> xs);

}  // namespace dmar
