#include "coex/trainer.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "coex/rl_math.hpp"

namespace coex {

using Clock = std::chrono::steady_clock;

Arm arm_from_string(const std::string& s) {
  if (s == "full") return Arm::full;
  if (s == "baseline") return Arm::baseline;
  if (s == "static_online_exp") return Arm::static_online_exp;
  if (s == "exp_only") return Arm::exp_only;
  throw std::invalid_argument("unknown arm: " + s);
}

std::string arm_to_string(Arm arm) {
  switch (arm) {
    case Arm::full: return "full";
    case Arm::baseline: return "baseline";
    case Arm::static_online_exp: return "static_online_exp";
    case Arm::exp_only: return "exp_only";
  }
  return "full";
}

namespace {

// Runs tasks on n threads, joining before return. n <= 1 runs inline in task
// order, which is the deterministic debug path.
void run_tasks(std::vector<std::function<void()>>& tasks, int n) {
  if (n <= 1 || tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::atomic<size_t> next{0};
  const int threads = std::min<int>(n, static_cast<int>(tasks.size()));
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int i = 0; i < threads; ++i) {
    pool.emplace_back([&] {
      while (true) {
        const size_t idx = next.fetch_add(1);
        if (idx >= tasks.size()) return;
        tasks[idx]();
      }
    });
  }
  for (auto& t : pool) t.join();
}

// Background extractor track: one logical consumer with coalescing triggers.
class ExtractorTrack {
 public:
  using UpdateFn = std::function<void(std::vector<ExtractorSample>, int64_t step)>;

  ExtractorTrack(UpdateFn fn, bool synchronous) : fn_(std::move(fn)), synchronous_(synchronous) {
    if (!synchronous_) worker_ = std::thread([this] { loop(); });
  }

  ~ExtractorTrack() { stop(); }

  void submit(std::vector<ExtractorSample> batch, int64_t step) {
    if (synchronous_) {
      fn_(std::move(batch), step);
      return;
    }
    {
      std::lock_guard<std::mutex> lk(mu_);
      // coalesce: while an update is in flight, fold new triggers into the
      // single pending batch (rewards accumulate per entry id)
      if (!pending_.empty()) {
        for (auto& s : batch) {
          bool merged = false;
          for (auto& p : pending_) {
            if (p.experience_id == s.experience_id) {
              p.reward_sum += s.reward_sum;
              p.guided_count += s.guided_count;
              merged = true;
              break;
            }
          }
          if (!merged) pending_.push_back(std::move(s));
        }
      } else {
        pending_ = std::move(batch);
      }
      pending_step_ = step;
    }
    cv_.notify_one();
  }

  void drain() {
    if (synchronous_) return;
    std::unique_lock<std::mutex> lk(mu_);
    idle_cv_.wait(lk, [&] { return pending_.empty() && !busy_; });
  }

  void stop() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      if (stop_) return;
      stop_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

 private:
  void loop() {
    while (true) {
      std::vector<ExtractorSample> batch;
      int64_t step = 0;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || !pending_.empty(); });
        if (stop_ && pending_.empty()) return;
        batch = std::move(pending_);
        pending_.clear();
        step = pending_step_;
        busy_ = true;
      }
      fn_(std::move(batch), step);
      {
        std::lock_guard<std::mutex> lk(mu_);
        busy_ = false;
      }
      idle_cv_.notify_all();
    }
  }

  UpdateFn fn_;
  bool synchronous_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::vector<ExtractorSample> pending_;
  int64_t pending_step_ = 0;
  bool busy_ = false;
  bool stop_ = false;
  std::thread worker_;
};

struct EvalOutcome {
  double success_rate = 0.0;
  double mean_actions_solved = 0.0;
};

EvalOutcome evaluate(const TrainerConfig& cfg, ActorPolicy& policy, ExperienceManager* manager,
                     const EnvFactory& env_factory, const SeedSequence& seeds,
                     bool with_experience) {
  EvalOutcome out;
  int solved = 0;
  double solved_actions = 0.0;
  for (int e = 0; e < cfg.eval_episodes; ++e) {
    auto env = env_factory();
    RolloutOptions opts;
    opts.ask_budget = cfg.ask_budget;
    opts.exp_hash_buckets = cfg.exp_hash_buckets;
    opts.greedy = true;
    opts.step = -1;  // evaluation episodes never feed distillation
    const uint64_t env_seed = seeds.derive("eval", static_cast<uint64_t>(e));
    std::mt19937_64 rng = seeds.stream("eval-rng", static_cast<uint64_t>(e));
    Trajectory traj = run_episode(*env, env_seed, policy, rng,
                                  with_experience ? manager : nullptr,
                                  with_experience && manager != nullptr, opts);
    if (traj.success) {
      ++solved;
      solved_actions += traj.steps_taken;
    }
  }
  out.success_rate =
      cfg.eval_episodes > 0 ? static_cast<double>(solved) / cfg.eval_episodes : 0.0;
  out.mean_actions_solved = solved > 0 ? solved_actions / solved : 0.0;
  return out;
}

}  // namespace

RunResult run_trainer(const TrainerConfig& cfg, Arm arm) {
  RunResult result;
  SeedSequence seeds(cfg.seed);

  if (cfg.group_size < 2 || cfg.group_size % 2 != 0)
    throw std::invalid_argument("group_size must be even and >= 2");
  if (cfg.merge_interval < 1) throw std::invalid_argument("merge_interval must be >= 1");

  auto embedder = std::make_shared<HashedBagEmbedder>(cfg.embedding_dim);
  ExtractorParams xparams;
  xparams.learning_rate = cfg.extractor_lr;
  RefineConfig refine_cfg;
  refine_cfg.mode = cfg.refine_mode;
  auto extractor = std::make_shared<ReferenceExtractor>(
      xparams, seeds.derive("extractor-init"), cfg.merge_threshold, refine_cfg);

  std::unique_ptr<ExperienceManager> manager;
  if (arm != Arm::baseline) {
    ManagerConfig mc = cfg.manager;
    mc.synchronous = cfg.debug_single_worker;
    mc.jitter_seed = seeds.derive("jitter");
    manager = std::make_unique<ExperienceManager>(embedder, extractor, mc);
  }

  EnvFactory env_factory = make_env_factory(cfg.env_name, cfg.env_opts);
  TabularSoftmaxPolicy policy(env_factory()->legal_actions(), cfg.actor_lr, cfg.clip_epsilon);

  ExtractorBuffer buffer(cfg.buffer_trigger);
  std::atomic<uint64_t> extractor_updates{0};

  auto do_cispo = [&](std::vector<ExtractorSample> batch, int64_t step) {
    CispoResult res;
    extractor->update_params([&](ExtractorParams& p) {
      res = cispo_update(p, batch, cfg.buffer_trigger, cfg.cispo);
    });
    if (res.status == CispoResult::Status::updated) {
      extractor_updates.fetch_add(1);
      if (manager && !res.trained_ids.empty()) manager->mark_trained(res.trained_ids, step);
    }
  };

  const int threads =
      cfg.debug_single_worker
          ? 1
          : (cfg.episode_threads > 0
                 ? cfg.episode_threads
                 : static_cast<int>(std::max(16u, 2 * std::thread::hardware_concurrency())));

  ExtractorTrack track(do_cispo, cfg.debug_single_worker);

  for (int64_t step = 1; step <= cfg.steps; ++step) {
    // -- rollout collection --------------------------------------------
    std::vector<RolloutGroup> groups(cfg.rollout_batch);
    for (auto& g : groups) g.trajectories.resize(cfg.group_size);

    std::vector<std::function<void()>> tasks;
    tasks.reserve(static_cast<size_t>(cfg.rollout_batch) * cfg.group_size);
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mu;

    for (int g = 0; g < cfg.rollout_batch; ++g) {
      const uint64_t goal_seed = seeds.derive("env", static_cast<uint64_t>(step),
                                              static_cast<uint64_t>(g));
      for (int slot = 0; slot < cfg.group_size; ++slot) {
        tasks.push_back([&, g, slot, goal_seed] {
          if (failed.load()) return;
          try {
            auto env = env_factory();
            const bool guided_slot = manager != nullptr && slot < cfg.group_size / 2;
            RolloutOptions opts;
            opts.ask_budget = cfg.ask_budget;
            opts.exp_hash_buckets = cfg.exp_hash_buckets;
            opts.step = step;
            opts.requester_id = g * cfg.group_size + slot;
            std::mt19937_64 rng =
                seeds.stream("rollout", static_cast<uint64_t>(step),
                             static_cast<uint64_t>(g * cfg.group_size + slot));
            groups[g].trajectories[slot] =
                run_episode(*env, goal_seed, policy, rng, manager.get(), guided_slot, opts);
          } catch (const std::exception& e) {
            failed.store(true);
            std::lock_guard<std::mutex> lk(failure_mu);
            failure = e.what();
          }
        });
      }
    }

    const auto collect_start = Clock::now();
    run_tasks(tasks, threads);
    const double collect_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - collect_start).count();
    result.collection_ms.push_back(collect_ms);

    if (failed.load()) {
      result.aborted_at_step = step;
      result.abort_reason = failure;
      break;
    }
    for (auto& g : groups)
      if (g.goal.empty() && !g.trajectories.empty()) g.goal = g.trajectories.front().goal;

    // -- distillation submissions (every completed episode) -------------
    uint64_t step_episodes = 0, step_successes = 0;
    double step_actions = 0.0;
    for (const auto& g : groups) {
      for (const auto& traj : g.trajectories) {
        ++step_episodes;
        step_successes += traj.success ? 1 : 0;
        step_actions += traj.steps_taken;
        if (manager) {
          DistillationRequest req;
          req.trajectory = traj;
          req.goal = traj.goal;
          req.outcome = traj.success ? Outcome::success : Outcome::failure;
          req.guiding_entry_id = traj.guiding_entry_id;
          req.enqueue_step = step;
          if (manager->submit_distillation(std::move(req))) ++result.distill_submitted;
        }
      }
    }
    result.episodes_run += step_episodes;

    // -- actor update ----------------------------------------------------
    if (arm != Arm::exp_only) {
      std::vector<std::vector<double>> advantages;
      advantages.reserve(groups.size());
      for (const auto& g : groups) {
        advantages.push_back(arm == Arm::baseline ? full_group_advantages(g, cfg.sigma_floor)
                                                  : split_advantages(g, cfg.sigma_floor));
      }
      policy.grpo_update(groups, advantages, arm != Arm::baseline);
    }

    // -- extractor sample accumulation + buffer-triggered update --------
    if (manager && arm != Arm::static_online_exp) {
      std::vector<Trajectory> all;
      for (const auto& g : groups)
        all.insert(all.end(), g.trajectories.begin(), g.trajectories.end());
      const auto aggs = assign_rewards(all);
      for (const auto& [id, agg] : aggs) {
        auto entry = manager->find_entry(id);
        if (!entry) continue;  // merged away before sampling; signal dropped
        buffer.accumulate(*entry, agg);
      }
      if (buffer.ready()) {
        auto batch = buffer.take();
        // weights from the entry counters at trigger time; merged-away
        // entries fall back to their accumulation-time snapshot
        for (auto& s : batch) {
          auto entry = manager->find_entry(s.experience_id);
          const uint64_t tc = entry ? entry->training_count : s.training_count_snapshot;
          const auto lt = entry ? entry->last_trained_step : s.last_trained_snapshot;
          s.advantage_weight = rl_math::training_count_weight(step, lt, tc, cfg.cooldown_delta,
                                                              cfg.decay_alpha);
        }
        track.submit(std::move(batch), step);
      }
    }

    // -- periodic merge --------------------------------------------------
    if (manager) manager->trigger_merge(step, cfg.merge_interval);

    // -- metrics ----------------------------------------------------------
    MetricsRecord rec;
    rec.step = step;
    rec.success_rate =
        step_episodes > 0 ? static_cast<double>(step_successes) / step_episodes : 0.0;
    rec.mean_actions = step_episodes > 0 ? step_actions / step_episodes : 0.0;
    if (manager) {
      auto window = manager->take_latency_window();
      rec.search_ms_mean = mean(window.total_ms);
      rec.search_ms_p99 = percentile(window.total_ms, 0.99);
      rec.cache_hit_rate = window.cache_lookups > 0
                               ? static_cast<double>(window.cache_hits) / window.cache_lookups
                               : 0.0;
      rec.bank_size = manager->bank_size();
      rec.dropped_distillations = manager->counters().dropped_distillations;
      for (double v : window.total_ms) result.search_total_ms.push_back(v);
    }
    rec.extractor_updates = extractor_updates.load();
    result.metrics.push_back(rec);
  }

  // settle the background tracks before evaluation and snapshots
  if (manager) manager->drain();
  track.drain();
  track.stop();

  const EvalOutcome with_exp =
      evaluate(cfg, policy, manager.get(), env_factory, seeds, manager != nullptr);
  const EvalOutcome without_exp = evaluate(cfg, policy, nullptr, env_factory, seeds, false);
  result.final_eval.success_with_exp = with_exp.success_rate;
  result.final_eval.mean_actions_solved_with = with_exp.mean_actions_solved;
  result.final_eval.success_without_exp = without_exp.success_rate;
  result.final_eval.mean_actions_solved_without = without_exp.mean_actions_solved;
  result.final_eval.episodes = cfg.eval_episodes;

  result.actor_snapshot = policy.serialize();
  result.extractor_snapshot = extractor->params_snapshot().serialize();
  result.extractor_update_count = extractor_updates.load();
  if (manager) {
    result.bank = manager->bank_snapshot();
    result.manager_counters = manager->counters();
    manager->shutdown();
  }
  return result;
}

std::vector<LatencyRow> bench_latency(TrainerConfig config, std::span<const int> batches,
                                      int64_t steps_per_arm) {
  std::vector<LatencyRow> rows;
  for (int b : batches) {
    TrainerConfig cfg = config;
    cfg.rollout_batch = b;
    cfg.steps = steps_per_arm;
    cfg.eval_episodes = 0;

    RunResult on = run_trainer(cfg, Arm::full);
    RunResult off = run_trainer(cfg, Arm::baseline);

    LatencyRow row;
    row.rollout_batch = b;
    row.on_mean_ms = mean(on.collection_ms);
    row.on_p99_ms = percentile(on.collection_ms, 0.99);
    row.off_mean_ms = mean(off.collection_ms);
    row.off_p99_ms = percentile(off.collection_ms, 0.99);
    row.search_mean_ms = mean(on.search_total_ms);
    row.search_p99_ms = percentile(on.search_total_ms, 0.99);
    row.overhead = row.off_mean_ms > 0 ? row.on_mean_ms / row.off_mean_ms - 1.0 : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace coex
