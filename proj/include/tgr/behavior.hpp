#pragma once

// Reasoning-behavior metrics over parsed traces: how many distinct audio
// regions a trace visits, whether the claims made about those regions match
// what is actually said there, and whether the reasoning supports the answer.
//
// Transcription and judging are delegated to external services through the
// Transcriber and Judge interfaces; in-process mocks live at the bottom.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tgr/corpus.hpp"
#include "tgr/trace.hpp"

namespace tgr {

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  /// Text spoken in `interval` of the audio. Must be safe to call concurrently.
  virtual std::string transcribe(const std::string& audio_ref, const TimeInterval& interval) = 0;
};

struct JudgeRequest {
  std::string sample_id;
  std::string question;
  std::vector<std::string> choices;
  std::string reasoning;
  std::string answer;
};

class Judge {
 public:
  virtual ~Judge() = default;
  /// Raw judge response; consistency_score accepts only "0" or "1".
  virtual std::string judge(const JudgeRequest& request) = 0;
};

/// Judge prompt for one sample. Ends with the instruction to output only 0 or 1.
std::string render_judge_prompt(const JudgeRequest& request);

/// Parses a raw verdict. Surrounding whitespace is ignored; anything other than
/// "0" or "1" raises ProtocolError naming the sample.
int parse_verdict(std::string_view raw, std::string_view sample_id);

/// Lowercased, punctuation-stripped whitespace tokens.
std::vector<std::string> similarity_tokens(std::string_view text);

/// Bag-of-tokens F1 between two texts; 0 when either side has no tokens.
double token_f1(std::string_view candidate, std::string_view reference);

/// Distinct intervals visited by the trace (same rule as count_grounded_units).
std::size_t regions_explored(const ReasoningTrace& trace);

/// Mean token F1 between each unit's claim and the transcription of its interval.
/// Intervals are clipped to [0, duration]; units starting at or past the end of
/// the audio score 0 without a transcriber call. No units -> 0.
double audiology_verify(const ReasoningTrace& trace, const std::string& audio_ref,
                        double duration, Transcriber& transcriber);

struct BehaviorSample {
  std::string id;
  std::string question;
  std::vector<std::string> choices;
  ReasoningTrace trace;
  std::string audio_ref;
  double duration = 0.0;
};

/// 1 or 0 for one sample; an absent answer is 0 and the judge is not called.
int consistency_verdict(const BehaviorSample& sample, Judge& judge);

/// Mean verdict over samples. Rejects an empty list.
double consistency_score(std::span<const BehaviorSample> samples, Judge& judge);

struct BehaviorReport {
  std::size_t n_examples = 0;
  double regions_explored = 0.0;
  std::optional<double> audiology_verify;  // absent without a transcriber
  std::optional<double> consistency;       // absent without a judge
};

struct BehaviorOptions {
  /// Samples evaluated at once; each holds at most one protocol call in flight.
  std::size_t max_in_flight = 4;
};

/// Rejects an empty corpus. Results do not depend on max_in_flight.
BehaviorReport behavior_report(std::span<const BehaviorSample> samples, Transcriber* transcriber,
                               Judge* judge, const BehaviorOptions& options = {});

// -- mocks ----------------------------------------------------------------------

/// Returns the words of the registered transcript whose midpoint lies in the interval.
class EchoTranscriber : public Transcriber {
 public:
  EchoTranscriber() = default;
  explicit EchoTranscriber(std::span<const TimedTranscript> transcripts);
  void add(TimedTranscript transcript);
  std::string transcribe(const std::string& audio_ref, const TimeInterval& interval) override;

 private:
  std::map<std::string, TimedTranscript> transcripts_;
};

/// "1" when the answer label occurs as a token of the reasoning text, else "0".
class TextMatchJudge : public Judge {
 public:
  std::string judge(const JudgeRequest& request) override;
};

}  // namespace tgr
