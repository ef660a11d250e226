#include "coex/rl_math.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace coex::rl_math {

double clip_ratio(double rho, double low, double high) {
  assert(low < high);
  return std::min(std::max(rho, low), high);
}

std::vector<double> group_normalize(std::span<const double> rewards, double sigma_floor) {
  assert(!rewards.empty());
  const size_t n = rewards.size();
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);

  bool all_equal = true;
  for (double r : rewards) {
    if (r != rewards[0]) {
      all_equal = false;
      break;
    }
  }
  if (all_equal) return std::vector<double>(n, 0.0);

  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);
  const double sigma = std::max(std::sqrt(var), sigma_floor);

  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = (rewards[i] - mean) / sigma;
  return out;
}

double clipped_surrogate(double rho, double advantage, double eps) {
  const double clipped = clip_ratio(rho, 1.0 - eps, 1.0 + eps);
  return std::min(rho * advantage, clipped * advantage);
}

double diversification_score(double s_rank, uint64_t retrieval_count, bool is_recent,
                             double lambda) {
  double s = s_rank - lambda * std::log(1.0 + static_cast<double>(retrieval_count));
  if (is_recent) s -= 1.0;
  return s;
}

double training_count_weight(int64_t step, std::optional<int64_t> last_trained_step,
                             uint64_t training_count, int64_t delta, double alpha) {
  if (last_trained_step && (step - *last_trained_step) < delta) return 0.0;
  return std::pow(1.0 + static_cast<double>(training_count), -alpha);
}

}  // namespace coex::rl_math
