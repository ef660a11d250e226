#include "coex/embedding.hpp"

#include <cctype>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "coex/rng.hpp"

namespace coex {

EmbeddingVector Embedder::embed(const std::string& text) {
  std::vector<std::string> one{text};
  return embed_batch(one)[0];
}

HashedBagEmbedder::HashedBagEmbedder(size_t dim) : dim_(dim) {
  if (dim == 0) throw std::invalid_argument("embedder dim must be positive");
}

std::vector<EmbeddingVector> HashedBagEmbedder::embed_batch(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  std::vector<uint64_t> counts(dim_);
  std::string token;
  for (const std::string& text : texts) {
    std::fill(counts.begin(), counts.end(), 0);
    token.clear();
    auto flush = [&] {
      if (!token.empty()) {
        counts[fnv1a64(token, kHashSeed) % dim_] += 1;
        token.clear();
      }
    };
    for (unsigned char c : text) {
      if (std::isalnum(c)) {
        token.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
      }
    }
    flush();

    uint64_t sq = 0;
    for (uint64_t c : counts) sq += c * c;

    EmbeddingVector v(dim_);
    if (sq == 0) {
      // Zero tokens: canonical all-equal unit vector.
      const float x = 1.0f / std::sqrt(static_cast<float>(dim_));
      std::fill(v.begin(), v.end(), x);
    } else {
      const float inv = 1.0f / std::sqrt(static_cast<float>(sq));
      for (size_t i = 0; i < dim_; ++i) v[i] = static_cast<float>(counts[i]) * inv;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::pair<EmbeddingVector, bool> EmbeddingCache::cached_embed(const std::string& text,
                                                              Embedder& embedder) {
  if (auto hit = lookup(text)) return {std::move(*hit), true};
  EmbeddingVector vec = embedder.embed(text);
  insert(text, vec);
  return {std::move(vec), false};
}

std::optional<EmbeddingVector> EmbeddingCache::lookup(const std::string& text) {
  std::lock_guard<std::mutex> lk(mu_);
  auto it = map_.find(text);
  if (it == map_.end()) return std::nullopt;
  lru_.splice(lru_.begin(), lru_, it->second.pos);
  return it->second.vec;
}

void EmbeddingCache::insert(const std::string& text, EmbeddingVector vec) {
  std::lock_guard<std::mutex> lk(mu_);
  insert_locked(text, std::move(vec));
}

void EmbeddingCache::insert_locked(const std::string& text, EmbeddingVector vec) {
  if (capacity_ == 0) return;
  auto it = map_.find(text);
  if (it != map_.end()) {
    it->second.vec = std::move(vec);
    lru_.splice(lru_.begin(), lru_, it->second.pos);
    return;
  }
  lru_.push_front(text);
  map_[text] = Slot{std::move(vec), lru_.begin()};
  while (map_.size() > capacity_) {
    map_.erase(lru_.back());
    lru_.pop_back();
  }
}

size_t EmbeddingCache::size() const {
  std::lock_guard<std::mutex> lk(mu_);
  return map_.size();
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
  // Double accumulation: the bank scan uses the float kernels (vec::dot on
  // unit vectors), but the contract value here is the normalized cosine.
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace coex
