#include "dmar/kernels.hpp"

#include <cmath>
#include <limits>

namespace dmar::kernels {

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double dot3_scalar(const double* x, const double* y, const double* z, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i] * z[i];
  return acc;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double exp_guarded(double x) {
  if (x > 700.0) return std::numeric_limits<double>::infinity();
  if (x < -700.0) return 0.0;
  return std::exp(x);
}

void vexp_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = exp_guarded(x[i]);
}

void vlogistic_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double u = x[i];
    const double t = exp_guarded(u >= 0.0 ? -u : u);
    out[i] = (u >= 0.0) ? 1.0 / (1.0 + t) : t / (1.0 + t);
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops table{dot_scalar, dot3_scalar, sum_scalar,
                         axpy_scalar, vexp_scalar, vlogistic_scalar, "scalar"};
  return table;
}

}  // namespace dmar::kernels
