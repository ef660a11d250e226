#include "coex/rng.hpp"

namespace coex {

namespace {
constexpr uint64_t kFnvPrime = 1099511628211ull;
}

uint64_t fnv1a64(std::string_view data, uint64_t seed) {
  uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

uint64_t fnv1a64(uint64_t value, uint64_t seed) {
  uint64_t h = seed;
  for (int i = 0; i < 8; ++i) {
    h ^= (value >> (i * 8)) & 0xffu;
    h *= kFnvPrime;
  }
  return h;
}

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t SeedSequence::derive(std::string_view name) const {
  return mix64(fnv1a64(name, mix64(root_)));
}

uint64_t SeedSequence::derive(std::string_view name, uint64_t a) const {
  return mix64(fnv1a64(a, derive(name)));
}

uint64_t SeedSequence::derive(std::string_view name, uint64_t a, uint64_t b) const {
  return mix64(fnv1a64(b, derive(name, a)));
}

}  // namespace coex
