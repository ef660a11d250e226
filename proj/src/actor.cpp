#include "coex/actor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "coex/rl_math.hpp"

namespace coex {

using nlohmann::json;

std::string policy_digest(const Observation& obs, bool has_experience,
                          const std::string& experience_text, int exp_hash_buckets) {
  std::ostringstream d;
  d << obs.local_mask << "|a:" << obs.agent.x << "," << obs.agent.y << "|" << obs.extra;
  if (has_experience) {
    d << "|e:" << (fnv1a64(experience_text, 0x7e57u) % static_cast<uint64_t>(exp_hash_buckets));
  } else {
    d << "|e:none";
  }
  return d.str();
}

size_t RolloutGroup::guided_count() const {
  size_t n = 0;
  for (const auto& t : trajectories) n += t.guided ? 1 : 0;
  return n;
}

TabularSoftmaxPolicy::TabularSoftmaxPolicy(std::vector<std::string> move_actions,
                                           double learning_rate, double clip_epsilon)
    : moves_(std::move(move_actions)),
      learning_rate_(learning_rate),
      clip_epsilon_(clip_epsilon) {
  if (moves_.empty()) throw std::invalid_argument("policy needs at least one move action");
}

std::vector<double> TabularSoftmaxPolicy::action_probs(const std::string& digest,
                                                       bool ask_available) const {
  const size_t n = moves_.size() + 1;  // ask logit lives in the last slot
  std::vector<double> logits(n, 0.0);
  auto it = table_.find(digest);
  if (it != table_.end()) logits = it->second.logits;

  const size_t active = ask_available ? n : n - 1;
  double mx = logits[0];
  for (size_t i = 1; i < active; ++i) mx = std::max(mx, logits[i]);
  std::vector<double> probs(n, 0.0);
  double sum = 0.0;
  for (size_t i = 0; i < active; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (size_t i = 0; i < active; ++i) probs[i] /= sum;
  return probs;
}

int TabularSoftmaxPolicy::action_index(const std::string& action) const {
  if (action.rfind(kAskPrefix, 0) == 0) return static_cast<int>(moves_.size());
  for (size_t i = 0; i < moves_.size(); ++i)
    if (moves_[i] == action) return static_cast<int>(i);
  throw std::logic_error("unknown action in trajectory: " + action);
}

std::string TabularSoftmaxPolicy::ask_action(const PolicyContext& ctx) const {
  std::ostringstream q;
  q << kAskPrefix << ctx.obs->goal << " | at (" << ctx.obs->agent.x << "," << ctx.obs->agent.y
    << ") near " << ctx.obs->local_mask;
  return q.str();
}

ActionChoice TabularSoftmaxPolicy::act(const PolicyContext& ctx, std::mt19937_64& rng) {
  auto probs = action_probs(ctx.digest, ctx.ask_available);
  const size_t active = ctx.ask_available ? probs.size() : probs.size() - 1;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double u = uni(rng);
  size_t pick = active - 1;
  double acc = 0.0;
  for (size_t i = 0; i < active; ++i) {
    acc += probs[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  std::string action = pick < moves_.size() ? moves_[pick] : ask_action(ctx);
  return {std::move(action), probs[pick]};
}

ActionChoice TabularSoftmaxPolicy::act_greedy(const PolicyContext& ctx) {
  auto probs = action_probs(ctx.digest, ctx.ask_available);
  const size_t active = ctx.ask_available ? probs.size() : probs.size() - 1;
  size_t pick = 0;
  for (size_t i = 1; i < active; ++i)
    if (probs[i] > probs[pick]) pick = i;
  std::string action = pick < moves_.size() ? moves_[pick] : ask_action(ctx);
  return {std::move(action), probs[pick]};
}

double TabularSoftmaxPolicy::trajectory_logprob(const Trajectory& traj) const {
  double lp = 0.0;
  for (const auto& step : traj.steps) {
    auto probs = action_probs(step.digest, step.ask_available);
    lp += std::log(probs[action_index(step.action)]);
  }
  return lp;
}

GrpoResult TabularSoftmaxPolicy::grpo_update(std::span<const RolloutGroup> groups,
                                             std::span<const std::vector<double>> advantages,
                                             bool split_weighting) {
  assert(groups.size() == advantages.size());
  GrpoResult result;
  std::map<std::string, std::vector<double>> grad;
  const double group_scale = groups.empty() ? 0.0 : 1.0 / static_cast<double>(groups.size());

  for (size_t g = 0; g < groups.size(); ++g) {
    const RolloutGroup& group = groups[g];
    const auto& adv = advantages[g];
    assert(adv.size() == group.trajectories.size());

    const size_t guided = group.guided_count();
    const size_t free_count = group.trajectories.size() - guided;

    for (size_t k = 0; k < group.trajectories.size(); ++k) {
      const Trajectory& traj = group.trajectories[k];
      double weight;
      if (split_weighting) {
        const size_t kc = traj.guided ? guided : free_count;
        weight = 0.5 / static_cast<double>(kc);
      } else {
        weight = 1.0 / static_cast<double>(group.trajectories.size());
      }
      weight *= group_scale;

      double behavior_lp = 0.0;
      for (const auto& s : traj.steps) behavior_lp += std::log(s.behavior_prob);
      const double log_rho = trajectory_logprob(traj) - behavior_lp;
      const double rho = std::exp(log_rho);
      if (!std::isfinite(rho)) {
        ++result.excluded_trajectories;
        continue;
      }
      const double a = adv[k];
      result.loss += weight * rl_math::clipped_surrogate(rho, a, clip_epsilon_);

      // min(rho*A, clip(rho)*A) has gradient rho*A*dlogpi unless the active
      // branch is the clipped constant.
      const bool clipped_out =
          (a > 0.0 && rho > 1.0 + clip_epsilon_) || (a < 0.0 && rho < 1.0 - clip_epsilon_);
      if (clipped_out || a == 0.0) continue;

      const double coef = weight * a * rho;
      for (const auto& s : traj.steps) {
        auto probs = action_probs(s.digest, s.ask_available);
        auto& grow = grad[s.digest];
        if (grow.empty()) grow.assign(moves_.size() + 1, 0.0);
        const int ai = action_index(s.action);
        const size_t active = s.ask_available ? probs.size() : probs.size() - 1;
        for (size_t b = 0; b < active; ++b) {
          grow[b] += coef * ((static_cast<int>(b) == ai ? 1.0 : 0.0) - probs[b]);
        }
      }
    }
  }

  for (auto& [digest, grow] : grad) {
    auto it = table_.find(digest);
    if (it == table_.end())
      it = table_.emplace(digest, Row{std::vector<double>(moves_.size() + 1, 0.0)}).first;
    for (size_t b = 0; b < grow.size(); ++b) it->second.logits[b] += learning_rate_ * grow[b];
  }
  return result;
}

std::string TabularSoftmaxPolicy::serialize() const {
  json j;
  j["moves"] = moves_;
  j["learning_rate"] = learning_rate_;
  j["clip_epsilon"] = clip_epsilon_;
  json table = json::object();
  for (const auto& [digest, row] : table_) table[digest] = row.logits;
  j["table"] = std::move(table);
  return j.dump();
}

TabularSoftmaxPolicy TabularSoftmaxPolicy::deserialize(const std::string& text) {
  json j = json::parse(text);
  TabularSoftmaxPolicy p(j.at("moves").get<std::vector<std::string>>(),
                         j.at("learning_rate").get<double>(),
                         j.at("clip_epsilon").get<double>());
  for (auto& [digest, logits] : j.at("table").items())
    p.table_[digest] = Row{logits.get<std::vector<double>>()};
  return p;
}

std::vector<double> split_advantages(const RolloutGroup& group, double sigma_floor) {
  std::vector<double> guided_rewards, free_rewards;
  for (const auto& t : group.trajectories)
    (t.guided ? guided_rewards : free_rewards).push_back(t.reward);

  std::vector<double> guided_adv, free_adv;
  if (!guided_rewards.empty())
    guided_adv = rl_math::group_normalize(guided_rewards, sigma_floor);
  if (!free_rewards.empty()) free_adv = rl_math::group_normalize(free_rewards, sigma_floor);

  std::vector<double> out;
  out.reserve(group.trajectories.size());
  size_t gi = 0, fi = 0;
  for (const auto& t : group.trajectories)
    out.push_back(t.guided ? guided_adv[gi++] : free_adv[fi++]);
  return out;
}

std::vector<double> full_group_advantages(const RolloutGroup& group, double sigma_floor) {
  std::vector<double> rewards;
  rewards.reserve(group.trajectories.size());
  for (const auto& t : group.trajectories) rewards.push_back(t.reward);
  return rl_math::group_normalize(rewards, sigma_floor);
}

Trajectory run_episode(Environment& env, uint64_t env_seed, ActorPolicy& policy,
                       std::mt19937_64 rng, ExperienceManager* manager, bool guided_slot,
                       const RolloutOptions& opts) {
  Observation obs = env.reset(env_seed);
  Trajectory traj;
  traj.goal = obs.goal;
  traj.guided = guided_slot;

  if (guided_slot && manager) {
    SearchQuery q;
    q.query_text = obs.goal;
    q.requester_id = opts.requester_id;
    q.issued_step = opts.step;
    RetrievalResult res = manager->search(q);
    if (res.entry_id) {
      traj.guiding_entry_id = res.entry_id;
      traj.injected_text = res.text;
    }
  }

  int ask_left = opts.ask_budget;
  while (true) {
    const bool has_exp = !traj.injected_text.empty();
    const bool ask_available = guided_slot && manager && has_exp && ask_left > 0;
    const std::string digest =
        policy_digest(obs, has_exp, traj.injected_text, opts.exp_hash_buckets);

    PolicyContext ctx;
    ctx.obs = &obs;
    ctx.digest = digest;
    ctx.ask_available = ask_available;
    ActionChoice choice = opts.greedy ? policy.act_greedy(ctx) : policy.act(ctx, rng);

    traj.steps.push_back({digest, choice.action, choice.prob, ask_available});

    if (choice.action.rfind(kAskPrefix, 0) == 0) {
      --ask_left;
      const std::string query = choice.action.substr(kAskPrefix.size());
      SearchQuery q;
      q.query_text = query;
      q.requester_id = opts.requester_id;
      q.issued_step = opts.step;
      RetrievalResult res = manager->search_and_ask(q);
      traj.ask_events.push_back({obs.step_index, query, res.entry_id ? res.text : ""});
      if (res.entry_id) {
        // refined text joins the context, shifting the experience digest
        traj.injected_text += "\n" + res.text;
      }
    }

    StepResult sr = env.step(choice.action);  // ask turns consume a step too
    obs = sr.observation;
    if (sr.done) {
      traj.reward = sr.outcome->reward;
      traj.success = sr.outcome->success;
      traj.steps_taken = sr.outcome->steps_taken;
      traj.reached_step_cap = !traj.success && traj.steps_taken >= env.step_cap();
      break;
    }
  }
  return traj;
}

RolloutGroup collect_group(uint64_t goal_seed, int k, ExperienceManager* manager,
                           const EnvFactory& env_factory, ActorPolicy& policy,
                           const SeedSequence& seeds, const RolloutOptions& opts) {
  if (k < 2 || k % 2 != 0) throw std::invalid_argument("group size K must be even and >= 2");
  RolloutGroup group;
  group.trajectories.reserve(k);
  for (int slot = 0; slot < k; ++slot) {
    auto env = env_factory();
    if (!env) throw std::runtime_error("environment construction failed; aborting group");
    const bool guided_slot = manager != nullptr && slot < k / 2;
    RolloutOptions slot_opts = opts;
    slot_opts.requester_id = slot;
    std::mt19937_64 rng = seeds.stream("rollout", goal_seed, static_cast<uint64_t>(slot));
    group.trajectories.push_back(
        run_episode(*env, goal_seed, policy, rng, manager, guided_slot, slot_opts));
    if (group.goal.empty()) group.goal = group.trajectories.back().goal;
  }
  return group;
}

}  // namespace coex
