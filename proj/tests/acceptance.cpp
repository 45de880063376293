// Acceptance checks: one PASS/FAIL line per criterion, with wall time against its budget.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "grpo_oracle.hpp"
#include "json.hpp"
#include "support.hpp"
#include "tgr/attention.hpp"
#include "tgr/behavior.hpp"
#include "tgr/corpus.hpp"
#include "tgr/grpo.hpp"
#include "tgr/io.hpp"
#include "tgr/metrics.hpp"
#include "tgr/reward.hpp"
#include "tgr/trace.hpp"

using namespace tgr;
using namespace tgr::testing;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

void expect(Outcome& o, bool cond, const std::string& what) {
  if (!cond && o.ok) {
    o.ok = false;
    o.detail = what;
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double compaction_oracle(std::size_t k) {
  if (k == 0) return 0.0;
  if (k <= 1) return 0.5;
  if (k >= 5) return 0.1;
  return 0.5 - 0.4 * static_cast<double>(k - 1) / 4.0;
}

Outcome reward_exactness() {
  Outcome o;
  const CompactionConfig cfg;  // k_ref 1, k_max 5, c_max 0.5, c_min 0.1
  const std::pair<std::size_t, double> cases[] = {{0, 0.0}, {1, 0.5}, {5, 0.1}, {8, 0.1}, {3, 0.3}};
  for (auto [k, want] : cases) {
    const double got = timestamp_grounding_reward(k, cfg);
    expect(o, std::abs(got - want) <= 1e-12, "k=" + std::to_string(k) + " gave " + fmt(got));
  }
  o.detail = o.ok ? "k=0,1,5,8 and k=3 within 1e-12" : o.detail;
  return o;
}

Outcome gradient_check() {
  Outcome o;
  double worst = 0.0;
  int configs = 0;
  for (auto p : {Parametrization::factored, Parametrization::tabular}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto cfg = random_gradient_config(seed, p);
      const auto analytic = objective_gradient(cfg.policy, cfg.reference, cfg.groups, cfg.params);
      const double err = max_relative_error(analytic, central_differences(cfg, 1e-5));
      worst = std::max(worst, err);
      ++configs;
    }
  }
  expect(o, worst < 1e-5, "worst relative error " + fmt(worst));
  if (o.ok) o.detail = std::to_string(configs) + " configurations, worst relative error " + fmt(worst);
  return o;
}

Outcome toy_learning() {
  Outcome o;
  const auto env = default_environment();
  double baseline = 0.0;
  for (const auto& task : env) {
    // exhaustive expectation under the uniform policy
    const std::size_t subsets = std::size_t{1} << task.segments.size();
    double sum = 0.0;
    for (std::size_t a = 0; a < task.choices.size(); ++a)
      for (std::size_t m = 0; m < subsets; ++m)
        sum += (task.choices[a] == task.ground_truth ? 1.0 : 0.0) +
               compaction_oracle(static_cast<std::size_t>(std::popcount(m)));
    baseline += sum / static_cast<double>(task.choices.size() * subsets);
  }
  baseline /= static_cast<double>(env.size());

  TrainConfig cfg;
  cfg.group_size = 8;
  cfg.epsilon = 0.2;
  cfg.beta = 0.04;
  cfg.steps = 300;
  const auto run = train_toy_policy(env, cfg);
  const auto again = train_toy_policy(env, cfg);
  expect(o, run.log == again.log, "training log differs between identical runs");
  expect(o, std::abs(run.initial_expected_reward - baseline) < 1e-12,
         "initial expected reward " + fmt(run.initial_expected_reward) + " vs oracle " + fmt(baseline));
  expect(o, run.final_expected_reward >= baseline + 0.5,
         "final expected reward " + fmt(run.final_expected_reward) + " vs baseline " + fmt(baseline));
  for (std::size_t t = 0; t < env.size(); ++t) {
    const auto table = reward_table(env[t], cfg.reward);
    std::size_t best = 0;
    for (std::size_t id = 1; id < table.size(); ++id)
      if (table[id] > table[best]) best = id;
    expect(o, std::popcount(decode_trajectory(env[t], best).grounded) == 1, "brute-force optimum is not k=1");
    const auto modal = decode_trajectory(env[t], modal_trajectory(run.policy, t));
    expect(o, std::popcount(modal.grounded) == 1,
           "task " + std::to_string(t) + " modal trajectory grounds " + std::to_string(std::popcount(modal.grounded)));
  }
  if (o.ok)
    o.detail = "expected reward " + fmt(baseline) + " -> " + fmt(run.final_expected_reward) + ", modal k=1 on all tasks";
  return o;
}

double grid_iou(const TimeInterval& a, const TimeInterval& b) {
  const auto ms = [](double x) { return static_cast<long>(std::llround(x * 1000.0)); };
  const long a0 = ms(a.start()), a1 = ms(a.end()), b0 = ms(b.start()), b1 = ms(b.end());
  long inter = 0, uni = 0;
  for (long t = std::min(a0, b0); t < std::max(a1, b1); ++t) {
    const bool in_a = t >= a0 && t < a1, in_b = t >= b0 && t < b1;
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  if (uni == 0) return a0 == b0 && a1 == b1 ? 1.0 : 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Outcome iou_oracle() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> centis(0, 6000);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    int a0 = centis(rng), a1 = centis(rng), b0 = centis(rng), b1 = centis(rng);
    if (a0 > a1) std::swap(a0, a1);
    if (b0 > b1) std::swap(b0, b1);
    const TimeInterval a(a0 / 100.0, a1 / 100.0), b(b0 / 100.0, b1 / 100.0);
    worst = std::max(worst, std::abs(interval_iou(a, b) - grid_iou(a, b)));
  }
  expect(o, worst <= 1e-3, "random pairs differ by " + fmt(worst));
  const double pair = interval_iou(TimeInterval(12.05, 14.29), TimeInterval(12.02, 14.34));
  expect(o, std::abs(pair - 0.9655) <= 1e-3, "grounded pair IoU " + fmt(pair));
  const double zero = interval_iou(TimeInterval(12.05, 14.29), TimeInterval(18.96, 21.6));
  expect(o, zero == 0.0, "zero-shot pair IoU " + fmt(zero));
  if (o.ok) o.detail = "1000 pairs, worst deviation " + fmt(worst) + "; pair " + fmt(pair) + "; zero-shot 0";
  return o;
}

Outcome round_trip() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> pos(0.0, 3600.0);
  const char* sentences[] = {"I hope the scientist who confirms stream theory,", "Yes.", "The storm reached the coast.",
                             "Where are you going?", "well, then"};
  const std::vector<std::string> abcd = {"A", "B", "C", "D"};
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double a = pos(rng), b = pos(rng);
    if (a > b) std::swap(a, b);
    const auto inst = render_sta_instance(sentences[i % 5], TimeInterval(a, b),
                                          i % 2 ? TemplateId::flamingo : TemplateId::omni);
    const auto trace = parse_completion(inst.answer, abcd);
    if (trace.units.size() != 1 || count_grounded_units(trace) != 1) {
      expect(o, false, "instance " + std::to_string(i) + " parsed to " + std::to_string(trace.units.size()) + " units");
      break;
    }
    worst = std::max({worst, std::abs(trace.units[0].interval.start() - a), std::abs(trace.units[0].interval.end() - b)});
  }
  expect(o, worst <= 0.005 + 1e-9, "worst endpoint error " + fmt(worst));
  if (o.ok) o.detail = "10000 instances, worst endpoint error " + fmt(worst) + ", k=1 throughout";
  return o;
}

Outcome behavior_golden() {
  Outcome o;
  std::ifstream tin(data_path("data/behavior_transcripts.jsonl"));
  std::ifstream min(data_path("data/behavior_manifest.jsonl"));
  std::ifstream cin(data_path("data/behavior_completions.jsonl"));
  const auto transcripts = read_transcripts(tin, "behavior_transcripts.jsonl");
  const auto manifest = read_audio_manifest(min, "behavior_manifest.jsonl");
  const auto records = read_completions(cin, "behavior_completions.jsonl");
  const auto expected = nlohmann::json::parse(read_file(data_path("data/behavior_expected.json")));
  std::vector<BehaviorSample> samples;
  for (std::size_t i = 0; i < records.size(); ++i) {
    BehaviorSample s;
    s.id = records[i].id;
    s.question = records[i].question;
    s.choices = records[i].labels();
    s.trace = parse_completion(records[i].completion, s.choices);
    s.audio_ref = manifest.at(i).audio_path;
    s.duration = manifest.at(i).duration;
    samples.push_back(std::move(s));
  }
  EchoTranscriber transcriber(transcripts);
  TextMatchJudge judge;
  const auto report = behavior_report(samples, &transcriber, &judge);
  expect(o, report.n_examples == expected["n_examples"].get<std::size_t>(), "n_examples");
  expect(o, report.regions_explored == expected["regions_explored"].get<double>(),
         "regions_explored " + fmt(report.regions_explored));
  expect(o, report.audiology_verify && *report.audiology_verify == expected["audiology_verify"].get<double>(),
         "audiology_verify " + fmt(report.audiology_verify.value_or(-1)));
  expect(o, report.consistency && *report.consistency == expected["consistency"].get<double>(),
         "consistency " + fmt(report.consistency.value_or(-1)));
  const auto& item = expected["token_f1_item"];
  const auto& first = samples.front();
  const double f1 = audiology_verify(first.trace, first.audio_ref, first.duration, transcriber);
  expect(o, first.id == item["id"].get<std::string>() && f1 == item["value"].get<double>() &&
                std::abs(f1 - 10.0 / 11.0) < 1e-15,
         "token F1 on " + first.id + " is " + fmt(f1));
  if (o.ok)
    o.detail = "regions " + fmt(report.regions_explored) + ", audiology " + fmt(*report.audiology_verify) +
               ", consistency " + fmt(*report.consistency) + ", token F1 10/11";
  return o;
}

Outcome attention_identities() {
  Outcome o;
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> dim(1, 400);
  std::uniform_int_distribution<int> block(0, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000 && o.ok; ++i) {
    const std::size_t n = dim(rng);
    std::vector<Block> assignment(n);
    for (auto& b : assignment) b = static_cast<Block>(block(rng));
    const SemanticBlockMap blocks(assignment);
    AttentionRecord r;
    r.weights.resize(n);
    for (auto& w : r.weights) w = u(rng);
    const double s = std::accumulate(r.weights.begin(), r.weights.end(), 0.0);
    for (auto& w : r.weights) w /= s;
    const auto summed = block_aggregate(r, blocks, AggregationMode::summed);
    const auto per = block_aggregate(r, blocks, AggregationMode::per_token);
    expect(o, std::abs(std::accumulate(summed.begin(), summed.end(), 0.0) - 1.0) <= 1e-4,
           "record " + std::to_string(i) + " does not conserve mass");
    for (auto b : kAllBlocks) {
      const auto k = static_cast<std::size_t>(b);
      expect(o, per[k] * static_cast<double>(blocks.count(b)) == summed[k],
             "record " + std::to_string(i) + " breaks per_token * count = summed");
    }
  }
  const std::vector<SemanticBlockMap::Range> ranges = {
      {Block::system, 0, 2}, {Block::audio, 2, 7}, {Block::instruction, 7, 9}, {Block::self_referential, 9, 10}};
  AttentionRecord sink;
  sink.weights = {0.35, 0.35, 0.02, 0.02, 0.02, 0.02, 0.02, 0.1, 0.05, 0.05};
  const double ratio = attention_sink_ratio(std::vector<AttentionRecord>{sink}, SemanticBlockMap::from_ranges(ranges));
  expect(o, std::abs(ratio - 17.5) <= 1e-9, "sink ratio " + fmt(ratio));
  if (o.ok) o.detail = "1000 records conserve mass and the identity holds exactly; sink ratio " + fmt(ratio);
  return o;
}

Outcome template_goldens() {
  Outcome o;
  const std::string sentence = "I hope the scientist who confirms stream theory";
  const TimeInterval iv(12.05, 14.29);
  const auto omni = render_sta_instance(sentence, iv, TemplateId::omni);
  const auto flamingo = render_sta_instance(sentence, iv, TemplateId::flamingo);
  expect(o, omni.question == read_file(data_path("golden/stage1_omni_question.txt")), "omni question");
  expect(o, omni.answer == read_file(data_path("golden/stage1_omni_answer.txt")), "omni answer");
  expect(o, flamingo.question == read_file(data_path("golden/stage1_flamingo_question.txt")), "flamingo question");
  expect(o, flamingo.answer == read_file(data_path("golden/stage1_flamingo_answer.txt")), "flamingo answer");
  const std::vector<Choice> choices = {{"A", "That the theory is disproved"},
                                       {"B", "That a scientist confirms stream theory"},
                                       {"C", "That the lecture ends early"},
                                       {"D", "That nobody asks questions"}};
  const auto stage2 = render_stage2_instruction("What does the second speaker hope for?", choices);
  expect(o, stage2 == read_file(data_path("golden/stage2_instruction.txt")), "stage-2 instruction");
  expect(o,
         stage2.find("To determine the best description, let's analyze the audio content and the given timestamps:") !=
             std::string::npos,
         "stage-2 opener missing");
  if (o.ok) o.detail = "5 golden files byte-identical";
  return o;
}

Outcome advantage_normalization() {
  Outcome o;
  std::mt19937_64 rng(5150);
  std::uniform_int_distribution<std::size_t> size(2, 16);
  std::uniform_real_distribution<double> reward(0.0, 1.5);
  std::size_t checked = 0, constant = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> r(size(rng));
    if (i % 10 == 0) {
      std::fill(r.begin(), r.end(), reward(rng));
    } else {
      for (auto& x : r) x = reward(rng);
    }
    const double g = static_cast<double>(r.size());
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / g;
    double var = 0.0;
    for (double x : r) var += (x - mean) * (x - mean);
    var /= g;
    const auto a = group_normalize_advantages(r);
    if (std::all_of(r.begin(), r.end(), [&](double x) { return x == r[0]; })) {
      expect(o, std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; }), "constant group not all zeros");
      ++constant;
      continue;
    }
    const double am = std::accumulate(a.begin(), a.end(), 0.0) / g;
    double av = 0.0;
    for (double x : a) av += (x - am) * (x - am);
    expect(o, std::abs(am) < 1e-10, "mean " + fmt(am));
    if (var > 1e-4) {
      expect(o, std::abs(std::sqrt(av / g) - 1.0) <= 1e-6, "std " + fmt(std::sqrt(av / g)));
      ++checked;
    }
  }
  if (o.ok)
    o.detail = std::to_string(checked) + " groups with unit std, " + std::to_string(constant) + " constant groups all zero";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "reward exactness", 1.0, reward_exactness},
      {2, "GRPO gradient check", 10.0, gradient_check},
      {3, "toy learning", 60.0, toy_learning},
      {4, "IoU oracle equivalence", 5.0, iou_oracle},
      {5, "parser/renderer round-trip", 10.0, round_trip},
      {6, "behavior pipeline golden", 2.0, behavior_golden},
      {7, "attention identities", 2.0, attention_identities},
      {8, "template bit-exactness", 1.0, template_goldens},
      {9, "advantage normalization", 2.0, advantage_normalization},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.ok && secs >= c.budget_s) {
      o.ok = false;
      o.detail = "took " + fmt(secs) + " s, budget " + fmt(c.budget_s) + " s";
    }
    failures += o.ok ? 0 : 1;
    std::printf("%s criterion %d: %s (%.3f s / %.0f s) %s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs, c.budget_s,
                o.detail.c_str());
  }
  std::fflush(stdout);
  return failures == 0 ? 0 : 1;
}
