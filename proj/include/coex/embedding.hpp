#pragma once

#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace coex {

// Fixed-dimension unit-norm text embedding.
using EmbeddingVector = std::vector<float>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual size_t dim() const = 0;
  // Order-preserving; output length == input length.
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;
  EmbeddingVector embed(const std::string& text);
};

// Deterministic reference embedder: lowercase, split on non-alphanumerics,
// FNV-hash each token into one of `dim` buckets, count, unit-normalize.
// Counts accumulate as integers and are normalized once, so equal inputs give
// bit-equal vectors on every platform. The empty text (zero tokens) maps to
// the canonical all-equal unit vector.
class HashedBagEmbedder : public Embedder {
 public:
  explicit HashedBagEmbedder(size_t dim = 256);

  size_t dim() const override { return dim_; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

  // Published so that independent reimplementations can reproduce vectors.
  static constexpr uint64_t kHashSeed = 0x9f4c7a1362e85bd1ull;

 private:
  size_t dim_;
};

// Exact-text LRU cache in front of an embedder.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(size_t capacity = 4096) : capacity_(capacity) {}

  // Returns {vector, hit}. On a miss the vector is computed through
  // `embedder`, inserted, and LRU eviction applied. Capacity 0 disables
  // caching entirely (always a miss, nothing stored).
  std::pair<EmbeddingVector, bool> cached_embed(const std::string& text, Embedder& embedder);

  // Lookup without computing; used by the batched path.
  std::optional<EmbeddingVector> lookup(const std::string& text);
  void insert(const std::string& text, EmbeddingVector vec);

  size_t size() const;
  size_t capacity() const { return capacity_; }

 private:
  void insert_locked(const std::string& text, EmbeddingVector vec);

  size_t capacity_;
  mutable std::mutex mu_;
  std::list<std::string> lru_;  // front = most recent
  struct Slot {
    EmbeddingVector vec;
    std::list<std::string>::iterator pos;
  };
  std::unordered_map<std::string, Slot> map_;
};

// Cosine similarity of two equal-dimension vectors. Throws
// std::invalid_argument on dimension mismatch.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace coex
