#include "coex/extractor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "coex/embedding.hpp"
#include "coex/rl_math.hpp"
#include "coex/rng.hpp"

namespace coex {

using nlohmann::json;

namespace {

constexpr int kC = ExtractorParams::kContexts;
constexpr int kP = ExtractorParams::kPositions;
constexpr int kV = ExtractorParams::kVocab;

std::array<double, kV> softmax_row(const std::array<double, kV>& logits) {
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  std::array<double, kV> p{};
  double sum = 0.0;
  for (int v = 0; v < kV; ++v) {
    p[v] = std::exp(logits[v] - mx);
    sum += p[v];
  }
  for (int v = 0; v < kV; ++v) p[v] /= sum;
  return p;
}

bool has_revisit(const Trajectory& t) {
  for (size_t i = 0; i < t.steps.size(); ++i)
    for (size_t j = i + 1; j < t.steps.size(); ++j)
      if (t.steps[i].digest == t.steps[j].digest) return true;
  return false;
}

std::string goal_descriptor(const std::string& goal) {
  return goal.size() <= 64 ? goal : goal.substr(0, 64);
}

std::string move_summary(const Trajectory& t) {
  std::string s;
  for (const auto& step : t.steps) {
    if (!step.action.empty()) s.push_back(step.action[0]);
    if (s.size() >= 24) break;
  }
  return s;
}

const char* kLoopPhrase[kV] = {
    "avoid revisiting cells you have already explored",
    "do not loop over the same squares",
    "break out of repeated movement cycles",
    "stop returning to positions you have visited",
};
const char* kWinPhrase[kV] = {
    "a direct route works",
    "move straight toward the target",
    "the short path succeeds",
    "head for the goal without detours",
};
const char* kProvenWord[kV] = {"proven", "works", "confirmed", "validated"};
const char* kCautionPhrase[kV] = {
    "ran out of turns",
    "timed out before the goal",
    "hit the step limit",
    "stalled before finishing",
};
const char* kEmphasis[kV] = {
    "",
    " prefer unexplored directions.",
    " scan the legend before moving.",
    " plan two moves ahead.",
};

// Appended segments are deduplicated and capped so repeated updates of the
// same entry cannot grow its text without bound.
std::string append_segment(const std::string& base, const std::string& segment,
                           size_t max_segments = 4) {
  std::vector<std::string> segs;
  size_t pos = 0;
  const std::string sep = " | ";
  std::string b = base;
  while (true) {
    size_t next = b.find(sep, pos);
    if (next == std::string::npos) {
      segs.push_back(b.substr(pos));
      break;
    }
    segs.push_back(b.substr(pos, next - pos));
    pos = next + sep.size();
  }
  if (std::find(segs.begin(), segs.end(), segment) == segs.end()) segs.push_back(segment);
  while (segs.size() > max_segments) segs.erase(segs.begin() + 1);  // keep the head segment
  std::string out;
  for (size_t i = 0; i < segs.size(); ++i) {
    if (i) out += sep;
    out += segs[i];
  }
  return out;
}

uint64_t request_fingerprint(const DistillationRequest& req) {
  uint64_t h = fnv1a64(req.goal, 0xa11ce5u);
  for (const auto& s : req.trajectory.steps) h = fnv1a64(s.action, h);
  h = fnv1a64(static_cast<uint64_t>(req.outcome == Outcome::success), h);
  h = fnv1a64(static_cast<uint64_t>(req.enqueue_step), h);
  return mix64(h);
}

}  // namespace

int32_t extractor_context_id(bool success, bool guided, bool revisited) {
  return (success ? 4 : 0) + (guided ? 2 : 0) + (revisited ? 1 : 0);
}

std::string ExtractorParams::serialize() const {
  json j;
  j["learning_rate"] = learning_rate;
  auto& rows = j["logits"] = json::array();
  for (int c = 0; c < kC; ++c)
    for (int p = 0; p < kP; ++p)
      for (int v = 0; v < kV; ++v) rows.push_back(logits[c][p][v]);
  return j.dump();
}

ExtractorParams ExtractorParams::deserialize(const std::string& text) {
  json j = json::parse(text);
  ExtractorParams params;
  params.learning_rate = j.at("learning_rate").get<double>();
  const auto& rows = j.at("logits");
  if (rows.size() != static_cast<size_t>(kC * kP * kV))
    throw std::runtime_error("extractor params: bad logit count");
  size_t i = 0;
  for (int c = 0; c < kC; ++c)
    for (int p = 0; p < kP; ++p)
      for (int v = 0; v < kV; ++v) params.logits[c][p][v] = rows[i++].get<double>();
  return params;
}

ReferenceExtractor::ReferenceExtractor(ExtractorParams params, uint64_t seed,
                                       double merge_threshold, RefineConfig refine_cfg)
    : params_(std::move(params)),
      seed_(seed),
      merge_threshold_(merge_threshold),
      refine_cfg_(refine_cfg) {}

BankOp ReferenceExtractor::distill(const DistillationRequest& req) {
  const Trajectory& traj = req.trajectory;
  if (traj.steps.empty()) return BankOp::make_return();

  const bool success = req.outcome == Outcome::success;
  const bool guided = req.guiding_entry_id.has_value();
  const bool revisited = has_revisit(traj);

  enum class Rule { add_win, add_loop, update_proven, update_caution, ret };
  Rule rule = Rule::ret;
  if (success) {
    if (guided) rule = Rule::update_proven;
    else if (!revisited) rule = Rule::add_win;
  } else {
    if (traj.reached_step_cap && revisited) rule = Rule::add_loop;
    else if (guided && traj.reached_step_cap) rule = Rule::update_caution;
  }
  if (rule == Rule::ret) return BankOp::make_return();

  const int32_t ctx = extractor_context_id(success, guided, revisited);

  ExtractorParams::Table logits;
  {
    std::shared_lock<std::shared_mutex> lk(params_mu_);
    logits = params_.logits;
  }

  // Response tokens pick phrasing variants; sampling is seeded per request so
  // distillation stays pure under the manager's concurrent consumer.
  std::mt19937_64 rng(mix64(seed_ ^ request_fingerprint(req)));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Provenance prov;
  prov.context_id = ctx;
  std::ostringstream prompt;
  prompt << "ctx=" << ctx << "|o=" << (success ? 's' : 'f') << "|g=" << (guided ? 1 : 0)
         << "|r=" << (revisited ? 1 : 0) << "|goal=" << goal_descriptor(req.goal)
         << "|steps=" << traj.steps_taken;
  prov.prompt = prompt.str();
  for (int p = 0; p < kP; ++p) {
    auto probs = softmax_row(logits[ctx][p]);
    double u = uni(rng);
    int tok = kV - 1;
    double acc = 0.0;
    for (int v = 0; v < kV; ++v) {
      acc += probs[v];
      if (u < acc) {
        tok = v;
        break;
      }
    }
    prov.response_tokens.push_back(tok);
    prov.response_logprobs.push_back(std::log(probs[tok]));
  }
  const int t0 = prov.response_tokens[0];
  const int t1 = prov.response_tokens[1];
  const int t2 = prov.response_tokens[2];

  const std::string goal64 = goal_descriptor(req.goal);
  const std::string moves = move_summary(traj);

  switch (rule) {
    case Rule::add_win: {
      std::string text = "task: " + goal64 + " | strategy: " + kWinPhrase[t0] + " (route " +
                         moves + ")." + kEmphasis[t1];
      if (t2 == 1) text += " done in " + std::to_string(traj.steps_taken) + " steps.";
      return BankOp::make_add(std::move(text), std::move(prov));
    }
    case Rule::add_loop: {
      std::string text = "task: " + goal64 + " | hint: " + kLoopPhrase[t0] + "." + kEmphasis[t1];
      if (t2 == 1) text += " wasted " + std::to_string(traj.steps_taken) + " steps.";
      return BankOp::make_add(std::move(text), std::move(prov));
    }
    case Rule::update_proven: {
      std::string seg = std::string(kProvenWord[t0]) + ": route " + moves;
      std::string base = traj.injected_text.empty() ? "task: " + goal64 : traj.injected_text;
      return BankOp::make_update(*req.guiding_entry_id, append_segment(base, seg),
                                 std::move(prov));
    }
    case Rule::update_caution: {
      std::string seg = std::string("caution: ") + kCautionPhrase[t0];
      std::string base = traj.injected_text.empty() ? "task: " + goal64 : traj.injected_text;
      return BankOp::make_update(*req.guiding_entry_id, append_segment(base, seg),
                                 std::move(prov));
    }
    default:
      return BankOp::make_return();
  }
}

std::string ReferenceExtractor::refine(const std::string& query_context,
                                       const std::string& entry_text) {
  if (refine_cfg_.mode == RefineConfig::Mode::identity) return entry_text;
  std::string header = query_context.substr(0, refine_cfg_.header_chars);
  if (entry_text.empty()) return "(no stored guidance) context: " + header;
  return "[" + header + "] " + entry_text;
}

std::vector<ExperienceEntry> ReferenceExtractor::merge_decide(
    std::span<const ExperienceEntry> chunk, std::span<const ExperienceEntry> carried) {
  return collapse_similar(chunk, carried, merge_threshold_);
}

std::vector<double> ReferenceExtractor::token_logprobs(int32_t context_id,
                                                       std::span<const int32_t> tokens) const {
  ExtractorParams::Table logits;
  {
    std::shared_lock<std::shared_mutex> lk(params_mu_);
    logits = params_.logits;
  }
  std::vector<double> out;
  out.reserve(tokens.size());
  assert(context_id >= 0 && context_id < kC);
  assert(tokens.size() <= static_cast<size_t>(kP));
  for (size_t p = 0; p < tokens.size(); ++p) {
    auto probs = softmax_row(logits[context_id][p]);
    out.push_back(std::log(probs[tokens[p]]));
  }
  return out;
}

ExtractorParams ReferenceExtractor::params_snapshot() const {
  std::shared_lock<std::shared_mutex> lk(params_mu_);
  return params_;
}

void ReferenceExtractor::update_params(const std::function<void(ExtractorParams&)>& fn) {
  std::unique_lock<std::shared_mutex> lk(params_mu_);
  fn(params_);
}

std::vector<ExperienceEntry> collapse_similar(std::span<const ExperienceEntry> chunk,
                                              std::span<const ExperienceEntry> carried,
                                              double cosine_threshold) {
  std::vector<ExperienceEntry> pool(carried.begin(), carried.end());
  pool.insert(pool.end(), chunk.begin(), chunk.end());
  std::sort(pool.begin(), pool.end(),
            [](const ExperienceEntry& a, const ExperienceEntry& b) { return a.id < b.id; });

  std::vector<ExperienceEntry> retained;
  for (const ExperienceEntry& cand : pool) {
    ExperienceEntry* dup = nullptr;
    for (ExperienceEntry& r : retained) {
      if (cosine_similarity(r.embedding, cand.embedding) > cosine_threshold) {
        dup = &r;
        break;
      }
    }
    if (!dup) {
      retained.push_back(cand);
      continue;
    }
    // Keep the more-retrieved side (lower id on ties); sum the counters so
    // diversification penalties stay meaningful after the merge.
    auto max_opt = [](std::optional<int64_t> a, std::optional<int64_t> b) {
      if (!a) return b;
      if (!b) return a;
      return std::optional<int64_t>(std::max(*a, *b));
    };
    const bool cand_wins = cand.retrieval_count > dup->retrieval_count;
    ExperienceEntry survivor = cand_wins ? cand : *dup;
    const ExperienceEntry& absorbed = cand_wins ? *dup : cand;
    survivor.retrieval_count += absorbed.retrieval_count;
    survivor.training_count += absorbed.training_count;
    survivor.last_retrieved_step =
        max_opt(survivor.last_retrieved_step, absorbed.last_retrieved_step);
    survivor.last_trained_step = max_opt(survivor.last_trained_step, absorbed.last_trained_step);
    *dup = std::move(survivor);
  }
  return retained;
}

std::map<EntryId, RewardAggregate> assign_rewards(std::span<const Trajectory> batch) {
  std::map<EntryId, RewardAggregate> out;
  for (const Trajectory& t : batch) {
    if (!t.guided || !t.guiding_entry_id) continue;
    RewardAggregate& agg = out[*t.guiding_entry_id];
    agg.reward_sum += t.success ? 1.0 : -1.0;
    agg.guided_count += 1;
  }
  return out;
}

void ExtractorBuffer::accumulate(const ExperienceEntry& entry, const RewardAggregate& agg) {
  auto it = index_.find(entry.id);
  if (it != index_.end()) {
    samples_[it->second].reward_sum += agg.reward_sum;
    samples_[it->second].guided_count += agg.guided_count;
    return;
  }
  ExtractorSample s;
  s.experience_id = entry.id;
  s.prompt_digest = entry.provenance.prompt;
  s.context_id = entry.provenance.context_id;
  s.response_tokens = entry.provenance.response_tokens;
  s.behavior_logprobs = entry.provenance.response_logprobs;
  s.reward_sum = agg.reward_sum;
  s.guided_count = agg.guided_count;
  s.training_count_snapshot = entry.training_count;
  s.last_trained_snapshot = entry.last_trained_step;
  index_[entry.id] = samples_.size();
  samples_.push_back(std::move(s));
}

std::vector<ExtractorSample> ExtractorBuffer::take() {
  std::vector<ExtractorSample> out = std::move(samples_);
  samples_.clear();
  index_.clear();
  return out;
}

CispoResult cispo_update(ExtractorParams& params, std::span<ExtractorSample> samples,
                         size_t trigger_size, const CispoConfig& cfg) {
  CispoResult res;
  if (samples.size() < trigger_size) return res;

  double mean = 0.0;
  for (const auto& s : samples) mean += s.aggregated_reward();
  mean /= static_cast<double>(samples.size());

  size_t total_tokens = 0;
  for (const auto& s : samples) total_tokens += s.response_tokens.size();

  ExtractorParams::Table grad{};
  double loss = 0.0;
  if (total_tokens > 0) {
    for (const auto& s : samples) {
      const double adv = (s.aggregated_reward() - mean) * s.advantage_weight;
      const int c = s.context_id;
      for (size_t p = 0; p < s.response_tokens.size(); ++p) {
        auto probs = softmax_row(params.logits[c][p]);
        const int tok = s.response_tokens[p];
        const double cur_lp = std::log(probs[tok]);
        const double rho = std::exp(cur_lp - s.behavior_logprobs[p]);
        // stop-gradient: the clipped ratio enters as a constant coefficient
        const double coef =
            rl_math::clip_ratio(rho, 1.0 - cfg.eps_is_low, 1.0 + cfg.eps_is_high) * adv;
        loss += coef * cur_lp;
        for (int v = 0; v < kV; ++v) {
          grad[c][p][v] += coef * ((v == tok ? 1.0 : 0.0) - probs[v]);
        }
      }
    }
    loss /= static_cast<double>(total_tokens);
    for (int c = 0; c < kC; ++c)
      for (int p = 0; p < kP; ++p)
        for (int v = 0; v < kV; ++v)
          params.logits[c][p][v] +=
              params.learning_rate * grad[c][p][v] / static_cast<double>(total_tokens);
  }

  res.status = CispoResult::Status::updated;
  res.loss = loss;
  for (const auto& s : samples)
    if (s.advantage_weight > 0.0) res.trained_ids.push_back(s.experience_id);
  return res;
}

double cispo_loss(const ExtractorParams& params, std::span<const ExtractorSample> samples,
                  std::span<const std::vector<double>> frozen_coefs) {
  size_t total_tokens = 0;
  for (const auto& s : samples) total_tokens += s.response_tokens.size();
  if (total_tokens == 0) return 0.0;
  double loss = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    for (size_t p = 0; p < s.response_tokens.size(); ++p) {
      auto probs = softmax_row(params.logits[s.context_id][p]);
      loss += frozen_coefs[i][p] * std::log(probs[s.response_tokens[p]]);
    }
  }
  return loss / static_cast<double>(total_tokens);
}

double critic_combined_reward(CriticAction action, double task_reward) {
  double score = 0.0;
  switch (action) {
    case CriticAction::accept: score = 1.0; break;
    case CriticAction::refine: score = 0.5; break;
    case CriticAction::reject: score = 0.0; break;
  }
  return score + task_reward;
}

double entropy_bonus(double delta_entropy, EntropyStrategy strategy,
                     const EntropyBonusConfig& cfg) {
  switch (strategy) {
    case EntropyStrategy::relative: {
      if (!(cfg.base_entropy > 0.0))
        throw std::invalid_argument("relative entropy bonus requires base entropy > 0");
      return std::clamp(cfg.weight * delta_entropy / cfg.base_entropy, cfg.clip_low,
                        cfg.clip_high);
    }
    case EntropyStrategy::tanh_shaped:
      return cfg.weight * std::tanh(delta_entropy);
    case EntropyStrategy::sigmoid:
      return cfg.weight * (2.0 / (1.0 + std::exp(-delta_entropy / cfg.tau)) - 1.0);
    case EntropyStrategy::asymmetric:
      return std::clamp(cfg.weight * delta_entropy, cfg.clip_low, cfg.clip_high);
    case EntropyStrategy::log_space: {
      const double s = delta_entropy > 0 ? 1.0 : (delta_entropy < 0 ? -1.0 : 0.0);
      return cfg.weight * s * std::log1p(std::fabs(delta_entropy));
    }
  }
  return 0.0;
}

}  // namespace coex
