#include "tgr/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "tgr/errors.hpp"

namespace tgr {

namespace {

std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw ValidationError("empty logit row");
  double top = -std::numeric_limits<double>::infinity();
  for (double z : logits) top = std::max(top, z / temperature);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z / temperature - top);
  const double log_norm = top + std::log(sum);
  std::vector<double> out;
  out.reserve(logits.size());
  for (double z : logits) out.push_back(z / temperature - log_norm);
  return out;
}

std::size_t sample_index(std::span<const double> probs, double u) {
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;  // u landed in the rounding gap at the top
}

Segment seg(double start, double end, const char* label) {
  return Segment{TimeInterval(start, end), label};
}

// Derivative of clipped_surrogate with respect to rho.
double surrogate_slope(double rho, double advantage, double epsilon) {
  if (advantage == 0.0) return 0.0;
  const double lo = 1.0 - epsilon;
  const double hi = 1.0 + epsilon;
  if (rho >= lo && rho <= hi) return advantage;
  const double clipped = std::clamp(rho, lo, hi);
  return rho * advantage < clipped * advantage ? advantage : 0.0;
}

}  // namespace

void SyntheticTask::validate() const {
  if (!(audio_len > 0.0)) throw ValidationError("task audio_len must be positive");
  if (segments.empty()) throw ValidationError("task has no candidate segments");
  if (segments.size() > kMaxSegments)
    throw ValidationError("task has more than " + std::to_string(kMaxSegments) + " segments");
  if (choices.empty()) throw ValidationError("task has no choices");
  if (std::find(choices.begin(), choices.end(), ground_truth) == choices.end())
    throw ValidationError("task ground_truth '" + ground_truth + "' is not a choice");
  if (gold_index >= segments.size()) throw ValidationError("task gold_index out of range");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].interval.end() > audio_len)
      throw ValidationError("segment " + std::to_string(i) + " exceeds audio_len");
    for (std::size_t j = 0; j < i; ++j)
      if (same_interval(segments[i].interval, segments[j].interval))
        throw ValidationError("segments " + std::to_string(j) + " and " + std::to_string(i) +
                              " share an interval");
  }
}

std::vector<SyntheticTask> default_environment() {
  const std::vector<std::string> abcd = {"A", "B", "C", "D"};
  std::vector<SyntheticTask> env;

  env.push_back({30.0,
                 {seg(0.50, 3.20, "a door closes softly"),
                  seg(4.10, 7.35, "the speaker raises her voice sharply"),
                  seg(8.00, 11.40, "a long pause follows the question"),
                  seg(12.05, 14.29, "I hope the scientist who confirms stream theory"),
                  seg(16.80, 20.10, "laughter from the audience"),
                  seg(22.00, 27.50, "the speaker lowers her voice to a whisper")},
                 "What emotion does the speaker convey most strongly?",
                 abcd,
                 "B",
                 1});
  env.push_back({24.0,
                 {seg(0.00, 2.40, "rain patters on a window"),
                  seg(3.00, 5.75, "a dog barks twice"),
                  seg(6.20, 9.90, "a car engine starts and idles"),
                  seg(10.50, 13.05, "footsteps on gravel"),
                  seg(14.00, 18.60, "a kettle whistles"),
                  seg(19.10, 23.80, "a door bell rings")},
                 "Which sound occurs right after the dog barks?",
                 abcd,
                 "C",
                 2});
  env.push_back({40.0,
                 {seg(1.25, 6.50, "the host introduces the guest"),
                  seg(7.00, 12.80, "the guest describes a research trip"),
                  seg(13.40, 19.95, "the host asks about funding"),
                  seg(20.50, 27.30, "the guest sighs and hesitates"),
                  seg(28.00, 33.15, "both speakers laugh"),
                  seg(34.00, 39.60, "the host thanks the guest")},
                 "How does the guest react to the funding question?",
                 abcd,
                 "D",
                 3});
  env.push_back({18.0,
                 {seg(0.30, 1.90, "a single piano note"),
                  seg(2.50, 4.45, "a crowd murmurs"),
                  seg(5.00, 8.20, "a referee whistle blows"),
                  seg(9.10, 11.70, "a crowd cheers loudly"),
                  seg(12.25, 14.00, "a ball bounces"),
                  seg(14.60, 17.40, "an announcer speaks")},
                 "Where was this recording most likely made?",
                 abcd,
                 "A",
                 2});
  for (const auto& task : env) task.validate();
  return env;
}

std::size_t trajectory_count(const SyntheticTask& task) {
  return task.choices.size() * (std::size_t{1} << task.segments.size());
}

Trajectory decode_trajectory(const SyntheticTask& task, std::size_t id) {
  if (id >= trajectory_count(task)) throw ValidationError("trajectory id out of range");
  const std::size_t subsets = std::size_t{1} << task.segments.size();
  return Trajectory{id / subsets, static_cast<std::uint32_t>(id % subsets)};
}

std::string render_trajectory(const SyntheticTask& task, std::size_t id) {
  const Trajectory traj = decode_trajectory(task, id);
  std::vector<RenderStep> steps;
  for (std::size_t s = 0; s < task.segments.size(); ++s)
    if (traj.grounded & (1u << s)) steps.push_back({task.segments[s].interval, task.segments[s].label});
  return render_completion(steps, task.choices[traj.answer]);
}

std::vector<double> reward_table(const SyntheticTask& task, const CompactionConfig& cfg) {
  task.validate();
  cfg.validate();
  std::vector<double> table(trajectory_count(task));
  for (std::size_t id = 0; id < table.size(); ++id) {
    const ReasoningTrace trace = parse_completion(render_trajectory(task, id), task.choices);
    table[id] = total_reward(trace, task.ground_truth, cfg).total;
  }
  return table;
}

// -- parameters / policy -----------------------------------------------------

std::size_t ParameterTable::size() const {
  std::size_t n = 0;
  for (const auto& row : rows) n += row.size();
  return n;
}

double& ParameterTable::flat(std::size_t i) {
  for (auto& row : rows) {
    if (i < row.size()) return row[i];
    i -= row.size();
  }
  throw ValidationError("parameter index out of range");
}

double ParameterTable::flat(std::size_t i) const {
  return const_cast<ParameterTable&>(*this).flat(i);
}

void ParameterTable::axpy(double scale, const ParameterTable& other) {
  if (other.rows.size() != rows.size()) throw ValidationError("parameter table shape mismatch");
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (other.rows[t].size() != rows[t].size())
      throw ValidationError("parameter table shape mismatch");
    for (std::size_t i = 0; i < rows[t].size(); ++i) rows[t][i] += scale * other.rows[t][i];
  }
}

std::string_view to_string(Parametrization p) {
  return p == Parametrization::factored ? "factored" : "tabular";
}

Parametrization parametrization_from_string(std::string_view name) {
  if (name == "factored") return Parametrization::factored;
  if (name == "tabular") return Parametrization::tabular;
  throw ValidationError("unknown parametrization '" + std::string(name) + "'");
}

TrajectoryFeatures TrajectoryFeatures::for_task(const SyntheticTask& task, Parametrization p) {
  TrajectoryFeatures f;
  const std::size_t n = tgr::trajectory_count(task);
  f.active.resize(n);
  if (p == Parametrization::tabular) {
    f.parameter_count = n;
    for (std::size_t id = 0; id < n; ++id) f.active[id] = {static_cast<std::uint32_t>(id)};
    return f;
  }
  const std::size_t answers = task.choices.size();
  f.parameter_count = answers + task.segments.size();
  for (std::size_t id = 0; id < n; ++id) {
    const Trajectory traj = decode_trajectory(task, id);
    auto& act = f.active[id];
    act.push_back(static_cast<std::uint32_t>(traj.answer));
    for (std::size_t s = 0; s < task.segments.size(); ++s)
      if (traj.grounded & (1u << s)) act.push_back(static_cast<std::uint32_t>(answers + s));
  }
  return f;
}

namespace {
ParameterTable zero_parameters(const std::vector<TrajectoryFeatures>& features) {
  ParameterTable params;
  for (const auto& f : features) params.rows.emplace_back(f.parameter_count, 0.0);
  return params;
}
}  // namespace

SoftmaxPolicy::SoftmaxPolicy(std::vector<TrajectoryFeatures> features, double temperature)
    : SoftmaxPolicy(features, zero_parameters(features), temperature) {}

SoftmaxPolicy::SoftmaxPolicy(std::vector<TrajectoryFeatures> features, ParameterTable params,
                             double temperature)
    : features_(std::move(features)), params_(std::move(params)), temperature_(temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ValidationError("policy temperature must be positive");
  if (params_.rows.size() != features_.size())
    throw ValidationError("parameter rows do not match the task count");
  for (std::size_t t = 0; t < features_.size(); ++t) {
    const auto& f = features_[t];
    if (f.active.empty()) throw ValidationError("empty trajectory space");
    if (params_.rows[t].size() != f.parameter_count)
      throw ValidationError("parameter row " + std::to_string(t) + " has the wrong length");
    for (const auto& act : f.active)
      for (auto j : act)
        if (j >= f.parameter_count) throw ValidationError("feature index out of range");
    for (double z : params_.rows[t])
      if (!std::isfinite(z)) throw ValidationError("non-finite policy parameter");
  }
}

SoftmaxPolicy SoftmaxPolicy::uniform(std::span<const SyntheticTask> env, Parametrization p,
                                     double temperature) {
  std::vector<TrajectoryFeatures> features;
  for (const auto& task : env) {
    task.validate();
    features.push_back(TrajectoryFeatures::for_task(task, p));
  }
  return SoftmaxPolicy(std::move(features), temperature);
}

std::vector<double> SoftmaxPolicy::trajectory_logits(std::size_t task) const {
  const auto& f = features_.at(task);
  const auto& theta = params_.rows.at(task);
  std::vector<double> z(f.trajectory_count(), 0.0);
  for (std::size_t id = 0; id < z.size(); ++id)
    for (auto j : f.active[id]) z[id] += theta[j];
  return z;
}

std::vector<double> SoftmaxPolicy::log_probabilities(std::size_t task) const {
  return log_softmax(trajectory_logits(task), temperature_);
}

std::vector<double> SoftmaxPolicy::probabilities(std::size_t task) const {
  auto lp = log_probabilities(task);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

// -- objective ----------------------------------------------------------------

void PolicyGroup::validate() const {
  const std::size_t g = trajectories.size();
  if (g < 2) throw ValidationError("policy group needs G >= 2");
  if (logp_current.size() != g || logp_old.size() != g || rewards.size() != g ||
      advantages.size() != g)
    throw ValidationError("policy group fields have mismatched lengths");
}

double likelihood_ratio(double logp_current, double logp_reference) {
  if (!std::isfinite(logp_current) || !std::isfinite(logp_reference))
    throw ValidationError("likelihood ratio needs finite log-probabilities");
  return std::exp(logp_current - logp_reference);
}

double clipped_surrogate(double rho, double advantage, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in (0, 1)");
  const double clipped = std::clamp(rho, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(rho * advantage, clipped * advantage);
}

double kl_penalty(std::span<const double> policy_probs, std::span<const double> reference_probs) {
  if (policy_probs.size() != reference_probs.size())
    throw ValidationError("KL operands have different lengths");
  double sum_p = 0.0;
  double sum_q = 0.0;
  double kl = 0.0;
  for (std::size_t i = 0; i < policy_probs.size(); ++i) {
    const double p = policy_probs[i];
    const double q = reference_probs[i];
    if (!(p >= 0.0) || !(q >= 0.0)) throw ValidationError("KL operands must be non-negative");
    sum_p += p;
    sum_q += q;
    if (p == 0.0) continue;
    if (q == 0.0) throw ValidationError("reference has zero mass where policy is positive");
    kl += p * std::log(p / q);
  }
  if (std::abs(sum_p - 1.0) > 1e-9 || std::abs(sum_q - 1.0) > 1e-9)
    throw ValidationError("KL operands must each sum to 1");
  return std::max(kl, 0.0);
}

double grpo_objective(const PolicyGroup& group, const GrpoParams& params,
                      std::span<const double> policy_probs,
                      std::span<const double> reference_probs) {
  group.validate();
  if (!(params.beta >= 0.0)) throw ValidationError("beta must be >= 0");
  double surrogate = 0.0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const double rho = likelihood_ratio(group.logp_current[i], group.logp_old[i]);
    surrogate += clipped_surrogate(rho, group.advantages[i], params.epsilon);
  }
  surrogate /= static_cast<double>(group.size());
  const double kl = params.beta == 0.0 ? 0.0 : kl_penalty(policy_probs, reference_probs);
  return surrogate - params.beta * kl;
}

std::vector<PolicyGroup> sample_groups(const SoftmaxPolicy& policy,
                                       const std::vector<std::vector<double>>& reward_tables,
                                       std::size_t group_size, std::uint64_t seed,
                                       std::uint64_t step) {
  if (group_size < 2) throw ValidationError("group size must be >= 2");
  if (reward_tables.size() != policy.task_count())
    throw ValidationError("reward tables do not match the policy's task count");
  std::vector<PolicyGroup> groups;
  groups.reserve(policy.task_count());
  for (std::size_t t = 0; t < policy.task_count(); ++t) {
    const auto logp = policy.log_probabilities(t);
    if (logp.size() != reward_tables[t].size())
      throw ValidationError("reward table size mismatch for task " + std::to_string(t));
    std::vector<double> probs(logp.size());
    std::transform(logp.begin(), logp.end(), probs.begin(), [](double v) { return std::exp(v); });

    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    PolicyGroup group;
    group.task = t;
    for (std::size_t i = 0; i < group_size; ++i) {
      const std::size_t id = sample_index(probs, unit(rng));
      group.trajectories.push_back(id);
      group.logp_current.push_back(logp[id]);
      group.logp_old.push_back(logp[id]);
      group.rewards.push_back(reward_tables[t][id]);
    }
    group.advantages = group_normalize_advantages(group.rewards);
    groups.push_back(std::move(group));
  }
  return groups;
}

namespace {

void check_shapes(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference,
                  std::span<const PolicyGroup> groups) {
  if (reference.task_count() != policy.task_count())
    throw ValidationError("reference policy has a different task count");
  if (groups.empty()) throw ValidationError("no policy groups");
  for (const auto& g : groups) {
    g.validate();
    if (g.task >= policy.task_count()) throw ValidationError("group task index out of range");
  }
}

double sampled_logp(const std::vector<double>& logp, std::size_t id) {
  const double v = logp.at(id);
  if (!std::isfinite(v) || std::exp(v) == 0.0)
    throw ValidationError("sampled trajectory has zero probability under the policy");
  return v;
}

}  // namespace

double batch_objective(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference,
                       std::span<const PolicyGroup> groups, const GrpoParams& params) {
  check_shapes(policy, reference, groups);
  double total = 0.0;
  for (const auto& g : groups) {
    const auto logp = policy.log_probabilities(g.task);
    PolicyGroup current = g;
    for (std::size_t i = 0; i < g.size(); ++i)
      current.logp_current[i] = sampled_logp(logp, g.trajectories[i]);
    const auto p = policy.probabilities(g.task);
    const auto q = reference.probabilities(g.task);
    total += grpo_objective(current, params, p, q);
  }
  return total / static_cast<double>(groups.size());
}

ParameterTable objective_gradient(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference,
                                  std::span<const PolicyGroup> groups, const GrpoParams& params) {
  check_shapes(policy, reference, groups);
  if (!(params.epsilon > 0.0 && params.epsilon < 1.0))
    throw ValidationError("epsilon must lie in (0, 1)");
  if (!(params.beta >= 0.0)) throw ValidationError("beta must be >= 0");

  ParameterTable grad;
  for (const auto& row : policy.parameters().rows) grad.rows.emplace_back(row.size(), 0.0);
  const double inv_temp = 1.0 / policy.temperature();
  const double inv_groups = 1.0 / static_cast<double>(groups.size());

  for (const auto& g : groups) {
    const auto& features = policy.features(g.task);
    const auto logp = policy.log_probabilities(g.task);
    std::vector<double> p(logp.size());
    std::transform(logp.begin(), logp.end(), p.begin(), [](double v) { return std::exp(v); });
    auto& out = grad.rows[g.task];

    // d log pi(tau) / d theta = (phi(tau) - E_pi[phi]) / T.
    std::vector<double> mean_phi(out.size(), 0.0);
    for (std::size_t id = 0; id < p.size(); ++id)
      for (auto j : features.active[id]) mean_phi[j] += p[id];

    // Surrogate: d f(rho_i) / d log pi_i = f'(rho_i) * rho_i.
    const double inv_g = 1.0 / static_cast<double>(g.size());
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double rho = likelihood_ratio(sampled_logp(logp, g.trajectories[i]), g.logp_old[i]);
      const double w = surrogate_slope(rho, g.advantages[i], params.epsilon) * rho * inv_g;
      for (auto j : features.active[g.trajectories[i]]) out[j] += w * inv_temp;
      weight_sum += w;
    }
    for (std::size_t j = 0; j < out.size(); ++j) out[j] -= weight_sum * mean_phi[j] * inv_temp;

    // KL: grad = sum_tau p_tau (log p_tau - log q_tau - KL) phi(tau) / T.
    if (params.beta != 0.0) {
      const auto logq = reference.log_probabilities(g.task);
      if (logq.size() != logp.size())
        throw ValidationError("reference policy has a different trajectory space");
      double kl = 0.0;
      for (std::size_t id = 0; id < p.size(); ++id)
        if (p[id] > 0.0) kl += p[id] * (logp[id] - logq[id]);
      for (std::size_t id = 0; id < p.size(); ++id) {
        if (p[id] == 0.0) continue;
        const double c = params.beta * p[id] * (logp[id] - logq[id] - kl) * inv_temp;
        for (auto j : features.active[id]) out[j] -= c;
      }
    }
  }
  for (auto& row : grad.rows)
    for (double& v : row) v *= inv_groups;
  return grad;
}

ParameterTable objective_gradient(const SoftmaxPolicy& policy, std::span<const SyntheticTask> env,
                              const SoftmaxPolicy& reference, const GrpoParams& params,
                              const CompactionConfig& reward_cfg, std::size_t group_size,
                              std::uint64_t seed) {
  std::vector<std::vector<double>> tables;
  for (const auto& task : env) tables.push_back(reward_table(task, reward_cfg));
  const auto groups = sample_groups(policy, tables, group_size, seed, 0);
  return objective_gradient(policy, reference, groups, params);
}

double expected_reward(const SoftmaxPolicy& policy,
                       const std::vector<std::vector<double>>& reward_tables) {
  if (reward_tables.size() != policy.task_count() || reward_tables.empty())
    throw ValidationError("reward tables do not match the policy's task count");
  double total = 0.0;
  for (std::size_t t = 0; t < policy.task_count(); ++t) {
    const auto p = policy.probabilities(t);
    if (p.size() != reward_tables[t].size())
      throw ValidationError("reward table size mismatch for task " + std::to_string(t));
    total += std::inner_product(p.begin(), p.end(), reward_tables[t].begin(), 0.0);
  }
  return total / static_cast<double>(policy.task_count());
}

double mean_kl(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference) {
  if (reference.task_count() != policy.task_count() || policy.task_count() == 0)
    throw ValidationError("policies have different task counts");
  double total = 0.0;
  for (std::size_t t = 0; t < policy.task_count(); ++t)
    total += kl_penalty(policy.probabilities(t), reference.probabilities(t));
  return total / static_cast<double>(policy.task_count());
}

std::size_t modal_trajectory(const SoftmaxPolicy& policy, std::size_t task) {
  const auto row = policy.trajectory_logits(task);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

// -- training -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (group_size < 2) throw ValidationError("grpo.group_size must be >= 2");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("grpo.epsilon must lie in (0, 1)");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ValidationError("grpo.beta must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("grpo.learning_rate must be >= 0");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ValidationError("grpo.temperature must be positive");
  reward.validate();
}

TrainResult train_toy_policy(std::span<const SyntheticTask> env, const TrainConfig& cfg) {
  if (env.empty()) throw ValidationError("training environment is empty");
  cfg.validate();

  std::vector<std::vector<double>> tables;
  for (const auto& task : env) tables.push_back(reward_table(task, cfg.reward));

  TrainResult result;
  result.policy = SoftmaxPolicy::uniform(env, cfg.parametrization, cfg.temperature);
  const SoftmaxPolicy reference = result.policy;
  const GrpoParams params{cfg.epsilon, cfg.beta};
  result.initial_expected_reward = expected_reward(result.policy, tables);

  result.log.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto groups = sample_groups(result.policy, tables, cfg.group_size, cfg.seed, step);
    TrainLogEntry entry;
    entry.step = step;
    entry.expected_reward = expected_reward(result.policy, tables);
    entry.objective = batch_objective(result.policy, reference, groups, params);
    entry.kl = mean_kl(result.policy, reference);
    result.log.push_back(entry);

    const ParameterTable grad = objective_gradient(result.policy, reference, groups, params);
    result.policy.parameters().axpy(cfg.learning_rate, grad);
  }
  result.final_expected_reward = expected_reward(result.policy, tables);
  return result;
}

std::string training_log_csv(std::span<const TrainLogEntry> log) {
  std::string out = "step,expected_reward,objective,kl\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e.step, e.expected_reward,
                  e.objective, e.kl);
    out += buf;
  }
  return out;
}

}  // namespace tgr
