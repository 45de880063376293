#include "tgr/behavior.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <thread>
#include <unordered_map>

#include "tgr/errors.hpp"

namespace tgr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

struct SampleResult {
  std::size_t regions = 0;
  double verify = 0.0;
  int verdict = 0;
};

}  // namespace

std::string render_judge_prompt(const JudgeRequest& request) {
  std::string out;
  out += "You are given a question about an audio clip, the answer choices, a reasoning trace and the final answer.\n";
  out += "Decide whether the reasoning logically supports the final answer.\n\n";
  out += "Question: " + request.question + "\n";
  out += "Choices:\n";
  for (const auto& c : request.choices) out += "- " + c + "\n";
  out += "\nReasoning:\n" + request.reasoning + "\n\n";
  out += "Final answer: " + request.answer + "\n\n";
  out += "Output 1 if the reasoning supports the final answer and 0 otherwise. Output only 0 or 1.";
  return out;
}

int parse_verdict(std::string_view raw, std::string_view sample_id) {
  const std::string_view v = trim(raw);
  if (v == "0") return 0;
  if (v == "1") return 1;
  std::string shown(raw.substr(0, 40));
  throw ProtocolError("judge returned a non-binary verdict for sample '" + std::string(sample_id) +
                      "': \"" + shown + (raw.size() > 40 ? "..." : "") + "\"");
}

std::vector<std::string> similarity_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (!std::ispunct(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

double token_f1(std::string_view candidate, std::string_view reference) {
  const auto cand = similarity_tokens(candidate);
  const auto ref = similarity_tokens(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  std::unordered_map<std::string, std::size_t> bag;
  for (const auto& t : ref) ++bag[t];
  std::size_t shared = 0;
  for (const auto& t : cand) {
    auto it = bag.find(t);
    if (it != bag.end() && it->second > 0) {
      --it->second;
      ++shared;
    }
  }
  if (shared == 0) return 0.0;
  const double precision = static_cast<double>(shared) / static_cast<double>(cand.size());
  const double recall = static_cast<double>(shared) / static_cast<double>(ref.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::size_t regions_explored(const ReasoningTrace& trace) { return count_grounded_units(trace); }

double audiology_verify(const ReasoningTrace& trace, const std::string& audio_ref, double duration,
                        Transcriber& transcriber) {
  if (!(duration >= 0.0)) throw ValidationError("audio duration must be non-negative");
  if (trace.units.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < trace.units.size(); ++i) {
    const auto& unit = trace.units[i];
    if (unit.interval.start() >= duration) continue;
    const TimeInterval clipped(unit.interval.start(), std::min(unit.interval.end(), duration));
    std::string heard;
    try {
      heard = transcriber.transcribe(audio_ref, clipped);
    } catch (const std::exception& e) {
      throw ProtocolError("transcriber failed on unit " + std::to_string(i) + " of '" + audio_ref +
                          "': " + e.what());
    }
    total += token_f1(unit.claim, heard);
  }
  return total / static_cast<double>(trace.units.size());
}

int consistency_verdict(const BehaviorSample& sample, Judge& judge) {
  if (!sample.trace.answer) return 0;
  JudgeRequest request{sample.id, sample.question, sample.choices, reasoning_text(sample.trace),
                       sample.trace.answer->label};
  return parse_verdict(judge.judge(request), sample.id);
}

double consistency_score(std::span<const BehaviorSample> samples, Judge& judge) {
  if (samples.empty()) throw ValidationError("consistency needs at least one sample");
  std::size_t ones = 0;
  for (const auto& s : samples) ones += static_cast<std::size_t>(consistency_verdict(s, judge));
  return static_cast<double>(ones) / static_cast<double>(samples.size());
}

BehaviorReport behavior_report(std::span<const BehaviorSample> samples, Transcriber* transcriber,
                               Judge* judge, const BehaviorOptions& options) {
  if (samples.empty()) throw ValidationError("behavior report needs a non-empty corpus");
  if (options.max_in_flight == 0) throw ValidationError("max_in_flight must be at least 1");

  std::vector<SampleResult> results(samples.size());
  std::vector<std::exception_ptr> errors(samples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        const auto& s = samples[i];
        results[i].regions = regions_explored(s.trace);
        if (transcriber)
          results[i].verify = audiology_verify(s.trace, s.audio_ref, s.duration, *transcriber);
        if (judge) results[i].verdict = consistency_verdict(s, *judge);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(options.max_in_flight, samples.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  double regions = 0.0, verify = 0.0, verdicts = 0.0;
  for (const auto& r : results) {
    regions += static_cast<double>(r.regions);
    verify += r.verify;
    verdicts += r.verdict;
  }
  const double n = static_cast<double>(samples.size());
  BehaviorReport report;
  report.n_examples = samples.size();
  report.regions_explored = regions / n;
  if (transcriber) report.audiology_verify = verify / n;
  if (judge) report.consistency = verdicts / n;
  return report;
}

EchoTranscriber::EchoTranscriber(std::span<const TimedTranscript> transcripts) {
  for (const auto& t : transcripts) add(t);
}

void EchoTranscriber::add(TimedTranscript transcript) {
  std::string key = transcript.audio_ref;
  transcripts_.insert_or_assign(std::move(key), std::move(transcript));
}

std::string EchoTranscriber::transcribe(const std::string& audio_ref, const TimeInterval& interval) {
  auto it = transcripts_.find(audio_ref);
  if (it == transcripts_.end()) throw ProtocolError("no transcript registered for '" + audio_ref + "'");
  std::string out;
  for (const auto& w : it->second.words) {
    const double mid = 0.5 * (w.start + w.end);
    if (mid < interval.start() || mid > interval.end()) continue;
    if (!out.empty()) out += ' ';
    out += w.word;
  }
  return out;
}

std::string TextMatchJudge::judge(const JudgeRequest& request) {
  return contains_label_token(request.reasoning, request.answer) ? "1" : "0";
}

}  // namespace tgr
