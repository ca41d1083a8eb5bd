#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dmar/errors.hpp"
#include "dmar/matrix.hpp"

namespace dmar {

// One observational dataset with partially observed outcomes. Immutable after
// construction; safe to share across workers. Outcomes are stored with a NaN
// marker where unobserved and every read goes through outcome_at(), which
// enforces the "Y readable iff effectively labeled" contract.
//
// treatment_label covers the setting where the treatment itself is only
// observed for a subset; absent means T is always observed. The effective
// label of a sample is outcome_label * treatment_label.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix x, std::vector<std::uint8_t> t, std::vector<std::uint8_t> r,
          std::vector<double> y,
          std::optional<std::vector<std::uint8_t>> rt = std::nullopt);

  std::size_t n() const { return covariates_.n_rows; }
  std::size_t dim() const { return covariates_.n_cols; }

  const Matrix& covariates() const { return covariates_; }
  std::span<const double> row(std::size_t i) const { return covariates_.row_span(i); }
  const std::vector<std::uint8_t>& outcome_label() const { return outcome_label_; }
  const std::optional<std::vector<std::uint8_t>>& treatment_label() const {
    return treatment_label_;
  }

  int effective_label(std::size_t i) const {
    int r = outcome_label_[i];
    if (treatment_label_) r &= (*treatment_label_)[i];
    return r;
  }

  int treatment_at(std::size_t i) const {
    if (treatment_label_ && !(*treatment_label_)[i])
      throw contract_error("treatment read at index with treatment_label=0");
    return treatment_[i];
  }

  // Raw treatment vector; callers must gate on treatment_label themselves.
  const std::vector<std::uint8_t>& treatment_raw() const { return treatment_; }

  double outcome_at(std::size_t i) const {
    if (!effective_label(i)) throw contract_error("outcome read at effectively unlabeled index");
    return outcome_[i];
  }

  // NaN where unobserved; used by serialization and by hot loops that have
  // already checked the label.
  const std::vector<double>& outcome_raw() const { return outcome_; }

 private:
  Matrix covariates_;
  std::vector<std::uint8_t> treatment_;
  std::vector<std::uint8_t> outcome_label_;
  std::optional<std::vector<std::uint8_t>> treatment_label_;
  std::vector<double> outcome_;
};

// Per-arm effective labeling indicator: arm 1 selects treated-and-labeled
// samples, arm 0 the untreated-and-labeled ones. When the treatment label is
// present it multiplies in, and an unobserved treatment never contributes.
struct ProductIndicator {
  int arm = 1;
  std::vector<std::uint8_t> gamma;
};

ProductIndicator build_product_indicator(const Dataset& ds, int arm);

// Partition of {0..n-1} into k folds. Sizes differ by at most one, with the
// remainder going to the lowest-numbered folds. Deterministic in (n, k, seed).
struct FoldAssignment {
  std::size_t n = 0;
  int k_folds = 0;
  std::vector<int> fold;  // values in [0, k_folds)

  std::vector<std::size_t> in_fold(int k) const;
  std::vector<std::size_t> complement(int k) const;
};

FoldAssignment make_folds(std::size_t n, int k, std::uint64_t seed);

// Plug-in effective-overlap estimate: the harmonic mean of propensity values,
// [mean(1/g_i)]^{-1}. Errors on any nonpositive value.
double effective_overlap(std::span<const double> ps_values);

}  // namespace dmar
