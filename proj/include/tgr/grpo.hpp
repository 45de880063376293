#pragma once

// Group Relative Policy Optimization on an enumerable toy policy.
//
// Each synthetic task exposes a finite trajectory space: one answer choice
// times a subset of the task's candidate segments to cite. A trajectory is
// rendered to a completion string, parsed back with the trace grammar and
// scored by the reward engine, so training exercises the same parse -> reward
// path as real completions.
//
// The policy is a log-linear softmax per task over that space. The clipped surrogate uses the
// likelihood ratio against the policy that sampled the group; the KL penalty
// is the exact categorical divergence from a frozen reference (the
// initialization of the run).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tgr/reward.hpp"
#include "tgr/trace.hpp"

namespace tgr {

struct Segment {
  TimeInterval interval;
  std::string label;
};

struct SyntheticTask {
  double audio_len = 0.0;
  std::vector<Segment> segments;
  std::string question;
  std::vector<std::string> choices;
  std::string ground_truth;
  std::size_t gold_index = 0;

  const TimeInterval& gold_interval() const { return segments.at(gold_index).interval; }
  /// Throws ValidationError when the task is malformed.
  void validate() const;
};

/// Four tasks, four choices (A-D), six candidate segments each.
std::vector<SyntheticTask> default_environment();

// -- trajectory space ---------------------------------------------------------

struct Trajectory {
  std::size_t answer = 0;     // index into choices
  std::uint32_t grounded = 0;  // bitmask over segments
};

inline constexpr std::size_t kMaxSegments = 12;

std::size_t trajectory_count(const SyntheticTask& task);
Trajectory decode_trajectory(const SyntheticTask& task, std::size_t id);
std::string render_trajectory(const SyntheticTask& task, std::size_t id);

/// Total reward of every trajectory, computed through render -> parse -> score.
std::vector<double> reward_table(const SyntheticTask& task, const CompactionConfig& cfg);

// -- policy -------------------------------------------------------------------

/// Parameter vectors, one row per task.
struct ParameterTable {
  std::vector<std::vector<double>> rows;

  std::size_t size() const;
  double& flat(std::size_t i);
  double flat(std::size_t i) const;
  /// this += scale * other (shapes must match)
  void axpy(double scale, const ParameterTable& other);
  friend bool operator==(const ParameterTable&, const ParameterTable&) = default;
};

/// How trajectory logits are built from parameters.
enum class Parametrization {
  /// One parameter per answer choice plus one per citable segment; a
  /// trajectory's logit is its answer parameter plus the parameters of the
  /// segments it cites.
  factored,
  /// One free logit per trajectory.
  tabular,
};

std::string_view to_string(Parametrization p);
Parametrization parametrization_from_string(std::string_view name);

/// Binary features of every trajectory of one task: indices of the active parameters.
struct TrajectoryFeatures {
  std::size_t parameter_count = 0;
  std::vector<std::vector<std::uint32_t>> active;  // one entry per trajectory

  static TrajectoryFeatures for_task(const SyntheticTask& task, Parametrization p);
  std::size_t trajectory_count() const { return active.size(); }
};

/// Log-linear categorical over each task's enumerated trajectory space:
/// pi(tau) = softmax_tau(theta . phi(tau) / T).
class SoftmaxPolicy {
 public:
  SoftmaxPolicy() = default;
  /// Zero parameters (uniform over trajectories).
  SoftmaxPolicy(std::vector<TrajectoryFeatures> features, double temperature = 1.0);
  SoftmaxPolicy(std::vector<TrajectoryFeatures> features, ParameterTable params,
                double temperature);

  static SoftmaxPolicy uniform(std::span<const SyntheticTask> env,
                               Parametrization p = Parametrization::factored,
                               double temperature = 1.0);

  std::size_t task_count() const { return features_.size(); }
  double temperature() const { return temperature_; }
  const ParameterTable& parameters() const { return params_; }
  ParameterTable& parameters() { return params_; }
  const TrajectoryFeatures& features(std::size_t task) const { return features_.at(task); }

  /// theta . phi(tau) for every trajectory of the task (before temperature).
  std::vector<double> trajectory_logits(std::size_t task) const;
  std::vector<double> log_probabilities(std::size_t task) const;
  std::vector<double> probabilities(std::size_t task) const;

 private:
  std::vector<TrajectoryFeatures> features_;
  ParameterTable params_;
  double temperature_ = 1.0;
};

// -- objective ----------------------------------------------------------------

struct PolicyGroup {
  std::size_t task = 0;
  std::vector<std::size_t> trajectories;
  /// log pi_theta(tau_i) under the policy being optimized.
  std::vector<double> logp_current;
  /// log-probability under the policy that sampled the group (ratio denominator).
  std::vector<double> logp_old;
  std::vector<double> rewards;
  std::vector<double> advantages;

  std::size_t size() const { return trajectories.size(); }
  void validate() const;
};

struct GrpoParams {
  double epsilon = 0.2;
  double beta = 0.04;
};

/// exp(logp_current - logp_reference). Rejects non-finite inputs.
double likelihood_ratio(double logp_current, double logp_reference);

/// min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)
double clipped_surrogate(double rho, double advantage, double epsilon);

/// Exact categorical D_KL(p || q).
double kl_penalty(std::span<const double> policy_probs, std::span<const double> reference_probs);

/// (1/G) sum_i clipped_surrogate(rho_i, A_i) - beta * KL(policy || reference) for one group.
double grpo_objective(const PolicyGroup& group, const GrpoParams& params,
                      std::span<const double> policy_probs,
                      std::span<const double> reference_probs);

/// One group per task. Each task draws from its own stream seeded by (seed, step, task).
std::vector<PolicyGroup> sample_groups(const SoftmaxPolicy& policy,
                                       const std::vector<std::vector<double>>& reward_tables,
                                       std::size_t group_size, std::uint64_t seed,
                                       std::uint64_t step);

/// Task-averaged GRPO objective at `policy` with the sampled groups held fixed.
double batch_objective(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference,
                       std::span<const PolicyGroup> groups, const GrpoParams& params);

/// Analytic gradient of batch_objective with respect to the policy parameters.
ParameterTable objective_gradient(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference,
                              std::span<const PolicyGroup> groups, const GrpoParams& params);

/// Samples groups from `policy` with `seed` and differentiates at the sampling point.
ParameterTable objective_gradient(const SoftmaxPolicy& policy, std::span<const SyntheticTask> env,
                              const SoftmaxPolicy& reference, const GrpoParams& params,
                              const CompactionConfig& reward_cfg, std::size_t group_size,
                              std::uint64_t seed);

/// Exact task-averaged expectation of the reward under the policy.
double expected_reward(const SoftmaxPolicy& policy,
                       const std::vector<std::vector<double>>& reward_tables);

/// Task-averaged KL(policy || reference).
double mean_kl(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference);

std::size_t modal_trajectory(const SoftmaxPolicy& policy, std::size_t task);

// -- training -----------------------------------------------------------------

struct TrainConfig {
  std::size_t group_size = 8;
  double epsilon = 0.2;
  double beta = 0.04;
  double learning_rate = 2.0;
  Parametrization parametrization = Parametrization::factored;
  std::size_t steps = 300;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  CompactionConfig reward;

  void validate() const;
};

struct TrainLogEntry {
  std::size_t step = 0;
  double expected_reward = 0.0;
  double objective = 0.0;
  double kl = 0.0;
  friend bool operator==(const TrainLogEntry&, const TrainLogEntry&) = default;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;  // metrics before the update of each step
  SoftmaxPolicy policy;
  double initial_expected_reward = 0.0;
  double final_expected_reward = 0.0;
};

TrainResult train_toy_policy(std::span<const SyntheticTask> env, const TrainConfig& cfg);

/// CSV with header step,expected_reward,objective,kl; values printed round-trip exact.
std::string training_log_csv(std::span<const TrainLogEntry> log);

}  // namespace tgr
