#include "coex/vec.hpp"

#include <immintrin.h>

#include <cassert>
#include <cmath>

namespace coex::vec {

namespace {

// Horizontal sum of 8 floats.
inline float hsum256_ps(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_movehdup_ps(lo));
  return _mm_cvtss_f32(lo);
}

}  // namespace

float dot_avx2(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  const size_t n = a.size();
  size_t i = 0;
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a.data() + i), _mm256_loadu_ps(b.data() + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a.data() + i + 8), _mm256_loadu_ps(b.data() + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a.data() + i), _mm256_loadu_ps(b.data() + i), acc0);
  }
  float acc = hsum256_ps(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

float l2_norm_avx2(std::span<const float> v) {
  const size_t n = v.size();
  size_t i = 0;
  __m256 acc = _mm256_setzero_ps();
  for (; i + 8 <= n; i += 8) {
    __m256 x = _mm256_loadu_ps(v.data() + i);
    acc = _mm256_fmadd_ps(x, x, acc);
  }
  float s = hsum256_ps(acc);
  for (; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

void scale_avx2(std::span<float> v, float s) {
  const size_t n = v.size();
  size_t i = 0;
  __m256 f = _mm256_set1_ps(s);
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(v.data() + i, _mm256_mul_ps(_mm256_loadu_ps(v.data() + i), f));
  }
  for (; i < n; ++i) v[i] *= s;
}

}  // namespace coex::vec
