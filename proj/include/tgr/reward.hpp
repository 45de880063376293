#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tgr/trace.hpp"

namespace tgr {

/// Parameters of the compaction (timestamp-grounding) reward.
struct CompactionConfig {
  int k_ref = 1;
  int k_max = 5;
  double c_max = 0.5;
  double c_min = 0.1;

  /// Throws ValidationError unless 1 <= k_ref < k_max and 0 <= c_min <= c_max.
  void validate() const;

  friend bool operator==(const CompactionConfig&, const CompactionConfig&) = default;
};

struct RewardBreakdown {
  double r_answer = 0.0;
  double r_tg = 0.0;
  double total = 0.0;
  std::size_t k = 0;
};

/// Stabilizer added to the group standard deviation.
inline constexpr double kAdvantageStdEpsilon = 1e-8;

/// Label normalization used for answer matching: parentheses and punctuation
/// stripped, lowercased.
std::string normalize_label(std::string_view label);

/// 1.0 iff the trace has an answer whose normalized label equals the ground truth.
double answer_reward(const ReasoningTrace& trace, std::string_view ground_truth);

/// Piecewise compaction reward: 0 at k = 0, c_max up to k_ref, c_min from k_max
/// on, linear in between.
double timestamp_grounding_reward(std::size_t k, const CompactionConfig& cfg);

RewardBreakdown total_reward(const ReasoningTrace& trace, std::string_view ground_truth,
                             const CompactionConfig& cfg);

/// (R_i - mean) / (population std + sigma_eps). Throws ValidationError for G < 2.
std::vector<double> group_normalize_advantages(std::span<const double> rewards,
                                               double sigma_eps = kAdvantageStdEpsilon);

}  // namespace tgr
