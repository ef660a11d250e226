#pragma once

#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coex/env.hpp"
#include "coex/manager.hpp"
#include "coex/rng.hpp"
#include "coex/types.hpp"

namespace coex {

// Reserved action prefix routing a mid-episode contextual retrieval through
// the manager. The suffix is the context-aware query text.
inline constexpr std::string_view kAskPrefix = "search_and_ask:";

struct PolicyContext {
  const Observation* obs = nullptr;
  std::string digest;  // precomputed state key (policy_digest)
  bool ask_available = false;
};

struct ActionChoice {
  std::string action;
  double prob = 1.0;  // behavior probability, in (0, 1]
};

class ActorPolicy {
 public:
  virtual ~ActorPolicy() = default;
  virtual ActionChoice act(const PolicyContext& ctx, std::mt19937_64& rng) = 0;
  virtual ActionChoice act_greedy(const PolicyContext& ctx) = 0;
  // Log-probability of the trajectory's recorded actions under the current
  // parameters, summed in step order.
  virtual double trajectory_logprob(const Trajectory& traj) const = 0;
};

// State key for the tabular policy: local wall mask, agent position, the
// environment's digest payload, plus the guided-context flag and a small hash
// of the injected experience text so retrieved experience can measurably
// change behavior while keeping the table finite.
std::string policy_digest(const Observation& obs, bool has_experience,
                          const std::string& experience_text, int exp_hash_buckets);

struct RolloutGroup {
  std::string goal;
  std::vector<Trajectory> trajectories;  // guided slots first

  size_t guided_count() const;
};

struct GrpoResult {
  double loss = 0.0;
  int excluded_trajectories = 0;  // non-finite importance ratios
};

class TabularSoftmaxPolicy : public ActorPolicy {
 public:
  TabularSoftmaxPolicy(std::vector<std::string> move_actions, double learning_rate = 0.5,
                       double clip_epsilon = 0.2);

  ActionChoice act(const PolicyContext& ctx, std::mt19937_64& rng) override;
  ActionChoice act_greedy(const PolicyContext& ctx) override;
  double trajectory_logprob(const Trajectory& traj) const override;

  // One gradient-ascent step on the clipped surrogate, accumulated over the
  // given groups. With `split_weighting`, subgroups contribute (1/2)(1/K_c)
  // each; otherwise the whole group is weighted 1/K.
  GrpoResult grpo_update(std::span<const RolloutGroup> groups,
                         std::span<const std::vector<double>> advantages, bool split_weighting);

  double clip_epsilon() const { return clip_epsilon_; }
  double learning_rate() const { return learning_rate_; }
  size_t table_size() const { return table_.size(); }

  std::string serialize() const;
  static TabularSoftmaxPolicy deserialize(const std::string& text);

 private:
  struct Row {
    std::vector<double> logits;  // moves..., ask (last slot)
  };
  std::vector<double> action_probs(const std::string& digest, bool ask_available) const;
  int action_index(const std::string& action) const;
  std::string ask_action(const PolicyContext& ctx) const;

  std::vector<std::string> moves_;
  double learning_rate_;
  double clip_epsilon_;
  std::map<std::string, Row> table_;  // ordered for deterministic snapshots
};

// Per-subgroup advantage normalization (guided and free independently); the
// output is aligned with group.trajectories.
std::vector<double> split_advantages(const RolloutGroup& group, double sigma_floor = 1e-6);

// Whole-group normalization, used by the experience-free baseline arm.
std::vector<double> full_group_advantages(const RolloutGroup& group, double sigma_floor = 1e-6);

struct RolloutOptions {
  int ask_budget = 2;
  int exp_hash_buckets = 4;
  bool greedy = false;
  int64_t step = 0;
  int requester_id = 0;
};

// Runs one episode. When `guided_slot` and a manager is given, one search at
// episode start injects retrieved text into the policy context; the policy
// may then spend its ask budget on search_and_ask turns. With no manager (or
// a free slot) the episode never touches the manager.
Trajectory run_episode(Environment& env, uint64_t env_seed, ActorPolicy& policy,
                       std::mt19937_64 rng, ExperienceManager* manager, bool guided_slot,
                       const RolloutOptions& opts);

// K environments with the same seed; the first K/2 slots are experience-
// guided when a manager is present. K must be even and >= 2.
RolloutGroup collect_group(uint64_t goal_seed, int k, ExperienceManager* manager,
                           const EnvFactory& env_factory, ActorPolicy& policy,
                           const SeedSequence& seeds, const RolloutOptions& opts);

}  // namespace coex
