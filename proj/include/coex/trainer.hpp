#pragma once

#include <memory>
#include <string>
#include <vector>

#include "coex/actor.hpp"
#include "coex/env.hpp"
#include "coex/extractor.hpp"
#include "coex/manager.hpp"
#include "coex/metrics.hpp"

namespace coex {

enum class Arm { full, baseline, static_online_exp, exp_only };

Arm arm_from_string(const std::string& s);
std::string arm_to_string(Arm arm);

struct TrainerConfig {
  // environment
  std::string env_name = "gridworld";
  EnvOptions env_opts{5, 5, 30};

  // actor
  double actor_lr = 0.5;
  double clip_epsilon = 0.2;
  double sigma_floor = 1e-6;
  int ask_budget = 2;
  int exp_hash_buckets = 4;

  // extractor
  double extractor_lr = 0.5;
  CispoConfig cispo;             // eps 0.1 / 0.1
  size_t buffer_trigger = 64;    // |B_phi|
  int64_t cooldown_delta = 2;    // reweighting delta
  double decay_alpha = 1.0;      // reweighting alpha
  double merge_threshold = 0.95;
  RefineConfig::Mode refine_mode = RefineConfig::Mode::header;

  // manager
  ManagerConfig manager;  // B=16, t_max=0.001 s, W=4, N=4, K=4, ...
  size_t embedding_dim = 256;

  // trainer
  int rollout_batch = 4;  // groups per step
  int group_size = 8;     // K
  int64_t steps = 200;
  int64_t merge_interval = 5;
  uint64_t seed = 0;
  int eval_episodes = 32;
  int64_t warmup_iters = 0;  // actor-critic warm-up, unused by default arms
  bool debug_single_worker = false;
  int episode_threads = 0;  // 0 = auto
};

// Final greedy evaluation, reported with and without retrieval.
struct EvalSummary {
  double success_with_exp = 0.0;
  double success_without_exp = 0.0;
  double mean_actions_solved_with = 0.0;
  double mean_actions_solved_without = 0.0;
  int episodes = 0;
};

struct RunResult {
  std::vector<MetricsRecord> metrics;
  EvalSummary final_eval;
  std::string actor_snapshot;      // serialized parameters
  std::string extractor_snapshot;  // serialized parameters
  std::vector<ExperienceEntry> bank;
  uint64_t extractor_update_count = 0;
  uint64_t episodes_run = 0;
  uint64_t distill_submitted = 0;
  ManagerCounters manager_counters;
  std::vector<double> collection_ms;  // per-step rollout collection wall time
  std::vector<double> search_total_ms;  // all per-query search latencies
  int64_t aborted_at_step = -1;       // >= 0 when a module error stopped the run
  std::string abort_reason;
};

// Orchestrates the primary actor loop and the background extractor track.
RunResult run_trainer(const TrainerConfig& config, Arm arm);

struct LatencyRow {
  int rollout_batch = 0;
  double on_mean_ms = 0.0, on_p99_ms = 0.0;
  double off_mean_ms = 0.0, off_p99_ms = 0.0;
  double search_mean_ms = 0.0, search_p99_ms = 0.0;
  double overhead = 0.0;  // on/off mean ratio - 1
};

// Runs `steps_per_arm` steps with the manager on and off per requested batch
// size and reports rollout/search timing.
std::vector<LatencyRow> bench_latency(TrainerConfig config, std::span<const int> batches,
                                      int64_t steps_per_arm);

}  // namespace coex
