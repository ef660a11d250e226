#include "coex/vec.hpp"

#include <atomic>
#include <cassert>
#include <cmath>

namespace coex::vec {

float dot_ref(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  float acc = 0.0f;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

float l2_norm_ref(std::span<const float> v) {
  float acc = 0.0f;
  for (float x : v) acc += x * x;
  return std::sqrt(acc);
}

void scale_ref(std::span<float> v, float s) {
  for (float& x : v) x *= s;
}

namespace {

enum class Kernel { scalar, avx2, neon };

Kernel detect() {
#if defined(COEX_BUILD_AVX2)
  if (__builtin_cpu_supports("avx2")) return Kernel::avx2;
#endif
#if defined(COEX_BUILD_NEON)
  return Kernel::neon;
#endif
  return Kernel::scalar;
}

std::atomic<bool> g_force_scalar{false};

Kernel active() {
  static const Kernel k = detect();
  return g_force_scalar.load(std::memory_order_relaxed) ? Kernel::scalar : k;
}

}  // namespace

void force_scalar(bool on) { g_force_scalar.store(on, std::memory_order_relaxed); }

std::string_view active_kernel() {
  switch (active()) {
    case Kernel::avx2: return "avx2";
    case Kernel::neon: return "neon";
    default: return "scalar";
  }
}

float dot(std::span<const float> a, std::span<const float> b) {
  switch (active()) {
#if defined(COEX_BUILD_AVX2)
    case Kernel::avx2: return dot_avx2(a, b);
#endif
#if defined(COEX_BUILD_NEON)
    case Kernel::neon: return dot_neon(a, b);
#endif
    default: return dot_ref(a, b);
  }
}

float l2_norm(std::span<const float> v) {
  switch (active()) {
#if defined(COEX_BUILD_AVX2)
    case Kernel::avx2: return l2_norm_avx2(v);
#endif
#if defined(COEX_BUILD_NEON)
    case Kernel::neon: return l2_norm_neon(v);
#endif
    default: return l2_norm_ref(v);
  }
}

void scale(std::span<float> v, float s) {
  switch (active()) {
#if defined(COEX_BUILD_AVX2)
    case Kernel::avx2: return scale_avx2(v, s);
#endif
#if defined(COEX_BUILD_NEON)
    case Kernel::neon: return scale_neon(v, s);
#endif
    default: return scale_ref(v, s);
  }
}

}  // namespace coex::vec
