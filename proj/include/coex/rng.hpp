#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace coex {

// 64-bit FNV-1a. Stable across platforms; used for token bucketing, substream
// derivation and retrieval jitter, so its constants must never change.
uint64_t fnv1a64(std::string_view data, uint64_t seed);
uint64_t fnv1a64(uint64_t value, uint64_t seed);

// splitmix64 finalizer, used to whiten derived seeds.
uint64_t mix64(uint64_t x);

// All randomness in a run flows from one root seed through named substreams:
// substream("env"), substream("actor-init"), substream("jitter"), ... so that
// two runs with the same root seed draw identical streams regardless of which
// other streams were consumed in between.
class SeedSequence {
 public:
  explicit SeedSequence(uint64_t root) : root_(root) {}

  uint64_t derive(std::string_view name) const;
  uint64_t derive(std::string_view name, uint64_t a) const;
  uint64_t derive(std::string_view name, uint64_t a, uint64_t b) const;

  std::mt19937_64 stream(std::string_view name) const { return std::mt19937_64(derive(name)); }
  std::mt19937_64 stream(std::string_view name, uint64_t a) const {
    return std::mt19937_64(derive(name, a));
  }
  std::mt19937_64 stream(std::string_view name, uint64_t a, uint64_t b) const {
    return std::mt19937_64(derive(name, a, b));
  }

  uint64_t root() const { return root_; }

 private:
  uint64_t root_;
};

}  // namespace coex
