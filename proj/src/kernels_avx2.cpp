// AVX2+FMA variants of the dense kernels. Built with function-level target
// attributes so the translation unit compiles without special arch flags;
// callers must check avx2_supported() before installing this table.

#include "dmar/kernels.hpp"

#include <stdexcept>

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <limits>

namespace dmar::kernels {

namespace {

__attribute__((target("avx2,fma"))) inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

__attribute__((target("avx2,fma")))
double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
  std::size_t i = 0;
  const std::size_t n16 = n & ~std::size_t(15);
  for (; i < n16; i += 16) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
    a2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), a2);
    a3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), a3);
  }
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4)
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3)));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

__attribute__((target("avx2,fma")))
double dot3_avx2(const double* x, const double* y, const double* z, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t(7);
  for (; i < n8; i += 8) {
    __m256d p0 = _mm256_mul_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(z + i));
    __m256d p1 = _mm256_mul_pd(_mm256_loadu_pd(y + i + 4), _mm256_loadu_pd(z + i + 4));
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), p0, a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), p1, a1);
  }
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) {
    __m256d p0 = _mm256_mul_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(z + i));
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), p0, a0);
  }
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += x[i] * y[i] * z[i];
  return acc;
}

__attribute__((target("avx2,fma")))
double sum_avx2(const double* x, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t(7);
  for (; i < n8; i += 8) {
    a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
    a1 = _mm256_add_pd(a1, _mm256_loadu_pd(x + i + 4));
  }
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

__attribute__((target("avx2,fma")))
void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t(7);
  for (; i < n8; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

// exp for 4 lanes: Cody-Waite range reduction, degree-13 Taylor polynomial,
// 2^n scaling through the exponent bits. |r| <= ln2/2 keeps the truncation
// error below 5e-18 relative. Inputs are pre-clamped to +-700 by the callers
// of this helper so n stays within the normal exponent range.
__attribute__((target("avx2,fma"))) inline __m256d exp4_core(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.44269504088896340736);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  __m256d p = _mm256_set1_pd(1.6059043836821614599e-10);  // 1/13!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.0876756987868098979e-09));   // 1/12!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.5052108385441718775e-08));   // 1/11!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985890653e-07));   // 1/10!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985892511e-06));   // 1/9!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.4801587301587301566e-05));   // 1/8!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.9841269841269841253e-04));   // 1/7!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.3888888888888889419e-03));   // 1/6!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(8.3333333333333332177e-03));   // 1/5!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(4.1666666666666664354e-02));   // 1/4!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.6666666666666665741e-01));   // 1/3!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(5.0e-01));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

__attribute__((target("avx2,fma"))) inline __m256d exp4_guarded(__m256d x) {
  const __m256d hi = _mm256_set1_pd(700.0);
  const __m256d lo = _mm256_set1_pd(-700.0);
  __m256d too_hi = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
  __m256d too_lo = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
  __m256d res = exp4_core(xc);
  res = _mm256_blendv_pd(res, _mm256_set1_pd(std::numeric_limits<double>::infinity()), too_hi);
  res = _mm256_blendv_pd(res, _mm256_setzero_pd(), too_lo);
  return res;
}

__attribute__((target("avx2,fma")))
void vexp_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) _mm256_storeu_pd(out + i, exp4_guarded(_mm256_loadu_pd(x + i)));
  if (i < n) {
    double buf_in[4] = {0, 0, 0, 0}, buf_out[4];
    for (std::size_t k = i; k < n; ++k) buf_in[k - i] = x[k];
    _mm256_storeu_pd(buf_out, exp4_guarded(_mm256_loadu_pd(buf_in)));
    for (std::size_t k = i; k < n; ++k) out[k] = buf_out[k - i];
  }
}

__attribute__((target("avx2,fma"))) inline __m256d logistic4(__m256d u) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  __m256d neg_abs = _mm256_min_pd(u, _mm256_sub_pd(zero, u));
  __m256d t = exp4_guarded(neg_abs);
  __m256d den = _mm256_add_pd(one, t);
  __m256d pos = _mm256_div_pd(one, den);
  __m256d neg = _mm256_div_pd(t, den);
  __m256d is_neg = _mm256_cmp_pd(u, zero, _CMP_LT_OQ);
  return _mm256_blendv_pd(pos, neg, is_neg);
}

__attribute__((target("avx2,fma")))
void vlogistic_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) _mm256_storeu_pd(out + i, logistic4(_mm256_loadu_pd(x + i)));
  if (i < n) {
    double buf_in[4] = {0, 0, 0, 0}, buf_out[4];
    for (std::size_t k = i; k < n; ++k) buf_in[k - i] = x[k];
    _mm256_storeu_pd(buf_out, logistic4(_mm256_loadu_pd(buf_in)));
    for (std::size_t k = i; k < n; ++k) out[k] = buf_out[k - i];
  }
}

}  // namespace

bool avx2_supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

const Ops& avx2_ops() {
  static const Ops table{dot_avx2, dot3_avx2, sum_avx2,
                         axpy_avx2, vexp_avx2, vlogistic_avx2, "avx2"};
  return table;
}

}  // namespace dmar::kernels

#else  // non-x86: no AVX2 table

namespace dmar::kernels {

bool avx2_supported() { return false; }

const Ops& avx2_ops() { throw std::runtime_error("avx2 kernels unavailable on this platform"); }

}  // namespace dmar::kernels

#endif
