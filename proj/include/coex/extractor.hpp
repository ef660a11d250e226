#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "coex/bank.hpp"
#include "coex/types.hpp"

namespace coex {

// Pluggable experience extractor. distill/refine/merge_decide are pure given
// parameters and may run on the manager's background consumer concurrently
// with rollouts.
class IExtractor {
 public:
  virtual ~IExtractor() = default;
  virtual BankOp distill(const DistillationRequest& req) = 0;
  virtual std::string refine(const std::string& query_context, const std::string& entry_text) = 0;
  virtual std::vector<ExperienceEntry> merge_decide(std::span<const ExperienceEntry> chunk,
                                                    std::span<const ExperienceEntry> carried) = 0;
  // Current log-probabilities of a recorded response under the live
  // parameters, one per token.
  virtual std::vector<double> token_logprobs(int32_t context_id,
                                             std::span<const int32_t> tokens) const = 0;
};

// ---------------------------------------------------------------------------
// Reference extractor: a categorical template policy. The structured op kind
// follows a fixed rule table over (outcome, guided, revisited); the response
// tokens choose phrasing variants and are sampled from per-context softmax
// heads, which gives the CISPO objective genuine token probabilities.
// ---------------------------------------------------------------------------

struct ExtractorParams {
  static constexpr int kContexts = 8;   // (success, guided, revisited) bits
  static constexpr int kPositions = 3;  // phrasing / emphasis / detail token
  static constexpr int kVocab = 4;

  using Table =
      std::array<std::array<std::array<double, kVocab>, kPositions>, kContexts>;
  Table logits{};
  double learning_rate = 0.5;

  bool operator==(const ExtractorParams&) const = default;

  std::string serialize() const;
  static ExtractorParams deserialize(const std::string& text);
};

int32_t extractor_context_id(bool success, bool guided, bool revisited);

struct RefineConfig {
  enum class Mode { identity, header };
  Mode mode = Mode::header;
  size_t header_chars = 48;
};

class ReferenceExtractor : public IExtractor {
 public:
  ReferenceExtractor(ExtractorParams params, uint64_t seed, double merge_threshold = 0.95,
                     RefineConfig refine_cfg = {});

  BankOp distill(const DistillationRequest& req) override;
  std::string refine(const std::string& query_context, const std::string& entry_text) override;
  std::vector<ExperienceEntry> merge_decide(std::span<const ExperienceEntry> chunk,
                                            std::span<const ExperienceEntry> carried) override;
  std::vector<double> token_logprobs(int32_t context_id,
                                     std::span<const int32_t> tokens) const override;

  // distill reads the parameters on the manager's consumer thread while the
  // background track updates them, so access goes through a shared mutex.
  ExtractorParams params_snapshot() const;
  void update_params(const std::function<void(ExtractorParams&)>& fn);

 private:
  mutable std::shared_mutex params_mu_;
  ExtractorParams params_;
  uint64_t seed_;
  double merge_threshold_;
  RefineConfig refine_cfg_;
};

// Near-duplicate collapse at a given cosine threshold; survivor is the entry
// with the higher retrieval count (lower id on ties) and absorbs the other's
// counters. Exposed standalone so merge behavior is testable without an
// extractor instance.
std::vector<ExperienceEntry> collapse_similar(std::span<const ExperienceEntry> chunk,
                                              std::span<const ExperienceEntry> carried,
                                              double cosine_threshold);

// ---------------------------------------------------------------------------
// Reward aggregation and the training buffer
// ---------------------------------------------------------------------------

struct RewardAggregate {
  double reward_sum = 0.0;
  uint64_t guided_count = 0;
  double mean() const { return reward_sum / static_cast<double>(guided_count); }
};

// Per unique guiding entry: mean of r = +1 (success) / -1 (failure) over the
// guided trajectories of the batch. Unguided trajectories contribute nothing.
std::map<EntryId, RewardAggregate> assign_rewards(std::span<const Trajectory> batch);

struct ExtractorSample {
  EntryId experience_id = 0;
  std::string prompt_digest;
  int32_t context_id = 0;
  std::vector<int32_t> response_tokens;
  std::vector<double> behavior_logprobs;
  double reward_sum = 0.0;
  uint64_t guided_count = 0;
  double advantage_weight = 1.0;  // w(m), filled in just before the update
  // Counter snapshot from accumulation time; the fallback when the entry has
  // been merged away by the time the buffer triggers.
  uint64_t training_count_snapshot = 0;
  std::optional<int64_t> last_trained_snapshot;

  double aggregated_reward() const { return reward_sum / static_cast<double>(guided_count); }
};

// Accumulates unique-entry samples across rollout steps until the trigger
// size is reached. A repeated entry id folds its rewards into the existing
// sample instead of appearing twice.
class ExtractorBuffer {
 public:
  explicit ExtractorBuffer(size_t trigger_size) : trigger_size_(trigger_size) {}

  void accumulate(const ExperienceEntry& entry, const RewardAggregate& agg);
  bool ready() const { return samples_.size() >= trigger_size_; }
  size_t unique_samples() const { return samples_.size(); }
  size_t trigger_size() const { return trigger_size_; }

  std::vector<ExtractorSample>& samples() { return samples_; }
  std::vector<ExtractorSample> take();  // move out and reset the window

 private:
  size_t trigger_size_;
  std::vector<ExtractorSample> samples_;
  std::map<EntryId, size_t> index_;
};

// ---------------------------------------------------------------------------
// CISPO update
// ---------------------------------------------------------------------------

struct CispoConfig {
  double eps_is_low = 0.1;
  double eps_is_high = 0.1;
};

struct CispoResult {
  enum class Status { updated, below_trigger };
  Status status = Status::below_trigger;
  double loss = 0.0;
  std::vector<EntryId> trained_ids;
};

// Token-level clipped-IS policy objective with the clipped ratio treated as a
// constant coefficient (no gradient through it), batch-level advantage
// A_i = mean_reward(i) - buffer_mean, multiplied by w(m_i), and the loss
// normalized by the total token count. One ascent step on `params`.
CispoResult cispo_update(ExtractorParams& params, std::span<ExtractorSample> samples,
                         size_t trigger_size, const CispoConfig& cfg);

// Loss value alone (no parameter movement), with externally supplied constant
// coefficients; used by the gradient checks.
double cispo_loss(const ExtractorParams& params, std::span<const ExtractorSample> samples,
                  std::span<const std::vector<double>> frozen_coefs);

// ---------------------------------------------------------------------------
// Optional reward shaping (library functions, off the training path)
// ---------------------------------------------------------------------------

enum class CriticAction { accept, refine, reject };

// Critic score 1 / 0.5 / 0 for accept / refine / reject, added to the task
// reward.
double critic_combined_reward(CriticAction action, double task_reward);

enum class EntropyStrategy { relative, tanh_shaped, sigmoid, asymmetric, log_space };

struct EntropyBonusConfig {
  double weight = 1.0;
  double tau = 1.0;
  double clip_low = -1.0;
  double clip_high = 1.0;
  double base_entropy = 0.0;  // required > 0 for the relative strategy
};

double entropy_bonus(double delta_entropy, EntropyStrategy strategy,
                     const EntropyBonusConfig& cfg);

}  // namespace coex
