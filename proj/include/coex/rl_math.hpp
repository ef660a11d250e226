#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace coex::rl_math {

// clamp of an importance ratio to [low, high]. Pre: low < high.
double clip_ratio(double rho, double low, double high);

// Group-relative normalization: (r - mean) / max(sigma, sigma_floor) with the
// population standard deviation. A group whose rewards are all equal maps to
// all-zero advantages by rule, not by division.
std::vector<double> group_normalize(std::span<const double> rewards, double sigma_floor);

// min(rho * A, clip(rho, 1-eps, 1+eps) * A)
double clipped_surrogate(double rho, double advantage, double eps);

// Diversity-aware retrieval score:
//   s = s_rank - lambda * ln(1 + c) - (recent ? 1 : 0)
double diversification_score(double s_rank, uint64_t retrieval_count, bool is_recent,
                             double lambda);

// Cooldown-and-decay advantage weight:
//   0 when trained within the last `delta` steps, else (1 + c_train)^(-alpha).
// Never-trained entries (no last_trained step) take the decay branch.
double training_count_weight(int64_t step, std::optional<int64_t> last_trained_step,
                             uint64_t training_count, int64_t delta, double alpha);

}  // namespace coex::rl_math
