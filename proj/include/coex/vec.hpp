#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace coex::vec {

// Scalar reference kernels. Ground truth for the SIMD variants; the
// equivalence tests compare against these.
float dot_ref(std::span<const float> a, std::span<const float> b);
float l2_norm_ref(std::span<const float> v);
void scale_ref(std::span<float> v, float s);

#if defined(COEX_BUILD_AVX2)
float dot_avx2(std::span<const float> a, std::span<const float> b);
float l2_norm_avx2(std::span<const float> v);
void scale_avx2(std::span<float> v, float s);
#endif
#if defined(COEX_BUILD_NEON)
float dot_neon(std::span<const float> a, std::span<const float> b);
float l2_norm_neon(std::span<const float> v);
void scale_neon(std::span<float> v, float s);
#endif

// Dispatched entry points. The implementation is picked once per process
// from CPU features; `active_kernel()` reports which one ("scalar",
// "avx2", "neon").
float dot(std::span<const float> a, std::span<const float> b);
float l2_norm(std::span<const float> v);
void scale(std::span<float> v, float s);

std::string_view active_kernel();

// Test hook: force the scalar path regardless of CPU features.
void force_scalar(bool on);

}  // namespace coex::vec
