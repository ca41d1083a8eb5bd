#include "dmar/dataset.hpp"

#include <cmath>

#include "dmar/rng.hpp"

namespace dmar {

namespace {

void check_binary(const std::vector<std::uint8_t>& v, const char* what) {
  for (std::uint8_t b : v)
    if (b != 0 && b != 1) throw contract_error(std::string(what) + " must be 0/1");
}

}  // namespace

Dataset::Dataset(Matrix x, std::vector<std::uint8_t> t, std::vector<std::uint8_t> r,
                 std::vector<double> y, std::optional<std::vector<std::uint8_t>> rt)
    : covariates_(std::move(x)),
      treatment_(std::move(t)),
      outcome_label_(std::move(r)),
      treatment_label_(std::move(rt)),
      outcome_(std::move(y)) {
  const std::size_t n = covariates_.n_rows;
  if (n < 1 || covariates_.n_cols < 1)
    throw contract_error("dataset needs at least one row and one column");
  if (treatment_.size() != n || outcome_label_.size() != n || outcome_.size() != n)
    throw contract_error("per-sample arrays must all have length n");
  if (treatment_label_ && treatment_label_->size() != n)
    throw contract_error("treatment_label must have length n");
  check_binary(treatment_, "treatment");
  check_binary(outcome_label_, "outcome_label");
  if (treatment_label_) check_binary(*treatment_label_, "treatment_label");
  for (std::size_t i = 0; i < n; ++i) {
    if (effective_label(i) && !std::isfinite(outcome_[i]))
      throw contract_error("labeled outcome must be finite");
  }
}

ProductIndicator build_product_indicator(const Dataset& ds, int arm) {
  if (arm != 0 && arm != 1) throw contract_error("arm must be 0 or 1");
  ProductIndicator out;
  out.arm = arm;
  out.gamma.resize(ds.n(), 0);
  const auto& r = ds.outcome_label();
  const auto& t = ds.treatment_raw();
  const auto& rt = ds.treatment_label();
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (rt && !(*rt)[i]) continue;  // unread treatment has no effect
    if (!r[i]) continue;
    out.gamma[i] = (arm == 1) ? t[i] : static_cast<std::uint8_t>(1 - t[i]);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::in_fold(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (fold[i] == k) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (fold[i] != k) out.push_back(i);
  return out;
}

FoldAssignment make_folds(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw data_error("make_folds: k must be >= 2");
  if (n < static_cast<std::size_t>(k)) throw data_error("make_folds: n < k");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = rng.below(i + 1);
    std::swap(perm[i], perm[j]);
  }
  FoldAssignment fa;
  fa.n = n;
  fa.k_folds = k;
  fa.fold.resize(n);
  // remainder spread over the lowest-numbered folds
  const std::size_t base = n / k, rem = n % k;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < rem ? 1 : 0);
    for (std::size_t c = 0; c < size; ++c) fa.fold[perm[pos++]] = f;
  }
  return fa;
}

double effective_overlap(std::span<const double> ps_values) {
  if (ps_values.empty()) throw contract_error("effective_overlap of empty range");
  double acc = 0.0;
  for (double g : ps_values) {
    if (!(g > 0.0)) throw numeric_error("effective_overlap: propensity value <= 0");
    acc += 1.0 / g;
  }
  return static_cast<double>(ps_values.size()) / acc;
}

}  // namespace dmar
