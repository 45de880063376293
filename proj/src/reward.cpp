#include "tgr/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "tgr/errors.hpp"

namespace tgr {

void CompactionConfig::validate() const {
  if (k_ref < 1) throw ValidationError("reward.k_ref must be >= 1");
  if (k_ref >= k_max) throw ValidationError("reward.k_ref must be < reward.k_max");
  if (!std::isfinite(c_min) || !std::isfinite(c_max) || c_min < 0.0 || c_min > c_max)
    throw ValidationError("reward compaction bounds must satisfy 0 <= c_min <= c_max");
}

std::string normalize_label(std::string_view label) {
  std::string out;
  for (char c : label) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u) || std::ispunct(u)) continue;
    out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

double answer_reward(const ReasoningTrace& trace, std::string_view ground_truth) {
  if (!trace.answer) return 0.0;
  const auto predicted = normalize_label(trace.answer->label);
  return !predicted.empty() && predicted == normalize_label(ground_truth) ? 1.0 : 0.0;
}

double timestamp_grounding_reward(std::size_t k, const CompactionConfig& cfg) {
  cfg.validate();
  const auto k_ref = static_cast<std::size_t>(cfg.k_ref);
  const auto k_max = static_cast<std::size_t>(cfg.k_max);
  if (k == 0) return 0.0;
  if (k <= k_ref) return cfg.c_max;
  if (k >= k_max) return cfg.c_min;
  const double slope = (cfg.c_max - cfg.c_min) / static_cast<double>(k_max - k_ref);
  return cfg.c_max - static_cast<double>(k - k_ref) * slope;
}

RewardBreakdown total_reward(const ReasoningTrace& trace, std::string_view ground_truth,
                             const CompactionConfig& cfg) {
  RewardBreakdown out;
  out.k = count_grounded_units(trace);
  out.r_answer = answer_reward(trace, ground_truth);
  out.r_tg = timestamp_grounding_reward(out.k, cfg);
  out.total = out.r_answer + out.r_tg;
  return out;
}

std::vector<double> group_normalize_advantages(std::span<const double> rewards, double sigma_eps) {
  if (rewards.size() < 2)
    throw ValidationError("advantage normalization needs a group of at least 2 rewards");
  if (!(sigma_eps >= 0.0)) throw ValidationError("sigma_eps must be non-negative");
  for (double r : rewards)
    if (!std::isfinite(r)) throw ValidationError("non-finite reward in group");
  // Identical rewards carry no signal; avoid rounding residue from the mean.
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; }))
    return std::vector<double>(rewards.size(), 0.0);

  const auto n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  // Second pass for the residual mean keeps the centred values at ~1 ulp.
  double correction = 0.0;
  for (double r : rewards) correction += r - mean;
  mean += correction / n;

  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);

  std::vector<double> out;
  out.reserve(rewards.size());
  const double denom = sd + sigma_eps;
  for (double r : rewards) {
    const double centred = r - mean;
    out.push_back(centred == 0.0 || denom == 0.0 ? 0.0 : centred / denom);
  }
  return out;
}

}  // namespace tgr
