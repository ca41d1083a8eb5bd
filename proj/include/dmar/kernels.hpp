#pragma once

#include <cstddef>

namespace dmar::kernels {

enum class Backend { scalar, avx2 };

// Dense double-precision primitives behind the solver and simulation inner
// loops. Two implementations exist: a portable scalar reference and an
// AVX2+FMA variant compiled via function target attributes and selected once
// at runtime. Any new kernel needs both plus an equivalence test.
//
// vexp/vlogistic contract: valid for |x| <= 700; vexp saturates to +inf above
// and 0 below that range (no subnormal outputs). Both backends honor the same
// contract so results agree to rounding.
struct Ops {
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum_i x[i] * y[i] * z[i]
  double (*dot3)(const double* x, const double* y, const double* z, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  void (*vexp)(const double* x, double* out, std::size_t n);
  // out[i] = 1 / (1 + exp(-x[i]))
  void (*vlogistic)(const double* x, double* out, std::size_t n);
  const char* name;
};

const Ops& scalar_ops();
const Ops& avx2_ops();  // valid only when avx2_supported()
bool avx2_supported();

// Active table. Defaults to the best supported backend.
const Ops& ops();
Backend active_backend();
// Test hook; throws std::runtime_error if the backend is unavailable.
void force_backend(Backend b);

}  // namespace dmar::kernels
