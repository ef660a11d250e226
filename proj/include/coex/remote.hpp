#pragma once

#include <memory>
#include <string>

#include "coex/actor.hpp"
#include "coex/embedding.hpp"
#include "coex/extractor.hpp"

namespace coex {

// HTTP adapters mirroring the served-model deployment. All are disabled by
// default and sit outside the acceptance path; the reference implementations
// remain the defaults.

// POST {"texts": [...]} -> {"vectors": [[...]]}
class RemoteEmbedder : public Embedder {
 public:
  RemoteEmbedder(std::string host, int port, std::string path, size_t dim,
                 double timeout_s = 10.0);
  ~RemoteEmbedder() override;

  size_t dim() const override { return dim_; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  size_t dim_;
};

// POST a chat-style request; the endpoint answers with the structured
// contract {"op": "add"|"update"|"return", "text": "..."}. refine posts
// {"query": ..., "entry": ...} -> {"text": ...}. Token-level training is not
// available over the wire, so token_logprobs reports empty.
class RemoteExtractor : public IExtractor {
 public:
  RemoteExtractor(std::string host, int port, std::string path, double timeout_s = 10.0,
                  double merge_threshold = 0.95);
  ~RemoteExtractor() override;

  BankOp distill(const DistillationRequest& req) override;
  std::string refine(const std::string& query_context, const std::string& entry_text) override;
  std::vector<ExperienceEntry> merge_decide(std::span<const ExperienceEntry> chunk,
                                            std::span<const ExperienceEntry> carried) override;
  std::vector<double> token_logprobs(int32_t context_id,
                                     std::span<const int32_t> tokens) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double merge_threshold_;
};

// Chat-completion actor: POST {"messages":[{"role","content"}]} ->
// {"choices":[{"message":{"content": "<action>"}}]}.
class RemoteActor : public ActorPolicy {
 public:
  RemoteActor(std::string host, int port, std::string path, double timeout_s = 10.0);
  ~RemoteActor() override;

  ActionChoice act(const PolicyContext& ctx, std::mt19937_64& rng) override;
  ActionChoice act_greedy(const PolicyContext& ctx) override;
  double trajectory_logprob(const Trajectory& traj) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace coex
