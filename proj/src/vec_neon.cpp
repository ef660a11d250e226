#include "coex/vec.hpp"

#include <arm_neon.h>

#include <cassert>
#include <cmath>

namespace coex::vec {

float dot_neon(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  const size_t n = a.size();
  size_t i = 0;
  float32x4_t acc = vdupq_n_f32(0.0f);
  for (; i + 4 <= n; i += 4) {
    acc = vfmaq_f32(acc, vld1q_f32(a.data() + i), vld1q_f32(b.data() + i));
  }
  float s = vaddvq_f32(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

float l2_norm_neon(std::span<const float> v) {
  const size_t n = v.size();
  size_t i = 0;
  float32x4_t acc = vdupq_n_f32(0.0f);
  for (; i + 4 <= n; i += 4) {
    float32x4_t x = vld1q_f32(v.data() + i);
    acc = vfmaq_f32(acc, x, x);
  }
  float s = vaddvq_f32(acc);
  for (; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

void scale_neon(std::span<float> v, float s) {
  const size_t n = v.size();
  size_t i = 0;
  float32x4_t f = vdupq_n_f32(s);
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(v.data() + i, vmulq_f32(vld1q_f32(v.data() + i), f));
  }
  for (; i < n; ++i) v[i] *= s;
}

}  // namespace coex::vec
