#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coex {

using EntryId = uint64_t;

// Prompt/response pair that generated an experience entry. The response is
// kept structured (token ids + behavior log-probs) so the entry can later
// serve as an extractor training sample.
struct Provenance {
  std::string prompt;
  std::vector<int32_t> response_tokens;
  std::vector<double> response_logprobs;
  int32_t context_id = 0;

  bool operator==(const Provenance&) const = default;
};

// One recorded decision step of an episode.
struct TrajectoryStep {
  std::string digest;    // policy state key the action was sampled from
  std::string action;
  double behavior_prob = 1.0;  // in (0, 1]
  bool ask_available = false;  // whether the ask action was in the sampled set
};

// Mid-episode contextual retrieval event.
struct AskEvent {
  int step_index = 0;
  std::string query;
  std::string returned_text;  // empty when nothing was retrieved
};

// One episode trace.
struct Trajectory {
  std::string goal;
  std::vector<TrajectoryStep> steps;
  double reward = 0.0;
  bool success = false;
  int steps_taken = 0;
  bool reached_step_cap = false;
  bool guided = false;  // subgroup tag: experience-guided half of the group
  std::optional<EntryId> guiding_entry_id;
  std::string injected_text;  // experience text in context, if any
  std::vector<AskEvent> ask_events;
};

enum class Outcome { success, failure };

// The tuple queued for experience distillation.
struct DistillationRequest {
  Trajectory trajectory;
  std::string goal;
  Outcome outcome = Outcome::failure;
  std::optional<EntryId> guiding_entry_id;
  int64_t enqueue_step = 0;
};

}  // namespace coex
