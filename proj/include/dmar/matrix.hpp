#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dmar/kernels.hpp"

namespace dmar {

// Row-major dense matrix. Observation matrices are stored this way: one row
// per sample, column 1 conventionally the constant intercept.
struct Matrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : n_rows(r), n_cols(c), v(r * c, 0.0) {}

  double* row(std::size_t i) { return v.data() + i * n_cols; }
  const double* row(std::size_t i) const { return v.data() + i * n_cols; }
  std::span<const double> row_span(std::size_t i) const { return {row(i), n_cols}; }
  double& at(std::size_t i, std::size_t j) { return v[i * n_cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * n_cols + j]; }
};

// Column-major design matrix used by the penalized solvers, whose inner loops
// sweep whole columns. Usually a gathered copy of a row subset of a Matrix.
struct DesignMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> v;

  DesignMatrix() = default;
  DesignMatrix(std::size_t r, std::size_t c) : n_rows(r), n_cols(c), v(r * c, 0.0) {}

  double* col(std::size_t j) { return v.data() + j * n_rows; }
  const double* col(std::size_t j) const { return v.data() + j * n_rows; }
  double at(std::size_t i, std::size_t j) const { return v[j * n_rows + i]; }
  double& at(std::size_t i, std::size_t j) { return v[j * n_rows + i]; }

  static DesignMatrix from_rows(const Matrix& x, std::span<const std::size_t> rows) {
    DesignMatrix d(rows.size(), x.n_cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double* src = x.row(rows[r]);
      for (std::size_t j = 0; j < x.n_cols; ++j) d.v[j * rows.size() + r] = src[j];
    }
    return d;
  }

  static DesignMatrix from_matrix(const Matrix& x) {
    DesignMatrix d(x.n_rows, x.n_cols);
    for (std::size_t i = 0; i < x.n_rows; ++i)
      for (std::size_t j = 0; j < x.n_cols; ++j) d.v[j * x.n_rows + i] = x.at(i, j);
    return d;
  }

  // eta = X * coef, accumulated column-wise so zero coefficients cost nothing
  void predict(std::span<const double> coef, std::span<double> eta) const {
    for (double& e : eta) e = 0.0;
    for (std::size_t j = 0; j < n_cols; ++j)
      if (coef[j] != 0.0) kernels::ops().axpy(coef[j], col(j), eta.data(), n_rows);
  }
};

inline double dot_row(std::span<const double> a, std::span<const double> b) {
  return kernels::ops().dot(a.data(), b.data(), a.size());
}

}  // namespace dmar
