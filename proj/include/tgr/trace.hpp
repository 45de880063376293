#pragma once

// Timestamp-grounded reasoning traces.
//
// A completion is scanned for two timestamp surface forms:
//
//   (a) "starts at 12.02 seconds and ends at 14.34 seconds"
//   (b) "(3.50s - 7.20s)", "[3.50 - 7.20]", "(12.05 -- 14.29 s)"
//
// Every match with start <= end becomes a GroundedUnit. Inverted spans are
// dropped, never swapped. The final answer is taken from the last line that
// names exactly one label of the task's choice set.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tgr {

/// Closed span [start, end] on the audio timeline, in seconds.
class TimeInterval {
 public:
  TimeInterval() = default;
  /// Throws ValidationError unless 0 <= start <= end (and both finite).
  TimeInterval(double start, double end);

  double start() const { return start_; }
  double end() const { return end_; }
  double length() const { return end_ - start_; }

  friend bool operator==(const TimeInterval&, const TimeInterval&) = default;

 private:
  double start_ = 0.0;
  double end_ = 0.0;
};

/// Endpoints closer than this (both of them) denote the same interval.
inline constexpr double kIntervalDedupTolerance = 0.01;

/// True when both endpoints differ by less than kIntervalDedupTolerance.
bool same_interval(const TimeInterval& a, const TimeInterval& b);

/// Byte range [begin, end) into the completion string.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct GroundedUnit {
  TimeInterval interval;
  /// Sentence of the completion containing the timestamp expression.
  std::string text;
  /// `text` with the timestamp expression cut out; the claim checked against audio.
  std::string claim;
  /// Span of the timestamp expression itself.
  CharSpan char_span;
};

struct AnswerChoice {
  std::string label;
  std::string source_line;
  /// Zero-based line index of source_line within the completion.
  std::size_t line_index = 0;
};

struct ReasoningTrace {
  std::string raw;
  std::vector<GroundedUnit> units;
  std::optional<AnswerChoice> answer;
  /// Non-empty trimmed lines of the completion, excluding the answer line.
  std::vector<std::string> step_texts;
};

/// Locates every timestamp expression in `text`. Total: malformed candidates are skipped.
std::vector<std::pair<TimeInterval, CharSpan>> scan_timestamps(std::string_view text);

/// Parses a raw model completion. Throws ValidationError only when `choice_set`
/// is empty or has duplicate labels; malformed content never throws.
ReasoningTrace parse_completion(std::string_view raw, std::span<const std::string> choice_set);

/// Scans lines bottom-up and returns the first one naming exactly one distinct label.
std::optional<AnswerChoice> extract_final_answer(std::string_view raw,
                                                 std::span<const std::string> choice_set);

/// Number of units after interval-level deduplication.
std::size_t count_grounded_units(const ReasoningTrace& trace);

/// Unique intervals in first-appearance order (the set counted by count_grounded_units).
std::vector<TimeInterval> unique_intervals(const ReasoningTrace& trace);

/// Reasoning text handed to judges: step_texts joined by newlines.
std::string reasoning_text(const ReasoningTrace& trace);

/// Half-up rounding to two decimals, rendered "X.XX".
std::string format_seconds(double seconds);

/// One reasoning step for the canonical renderer.
struct RenderStep {
  TimeInterval interval;
  std::string claim;
};

inline constexpr std::string_view kStage2Opener =
    "To determine the best description, let's analyze the audio content and the given timestamps:";

/// Canonical completion: opener line, one "(X.XXs - Y.YYs) claim." line per step,
/// then "Answer: (L)" when a label is given. Accepted back by parse_completion.
std::string render_completion(std::span<const RenderStep> steps,
                              const std::optional<std::string>& answer_label);

/// Renders a parsed trace through render_completion using each unit's claim.
std::string render_trace(const ReasoningTrace& trace);

/// True when `token` occurs in `line` delimited by non-alphanumeric bytes.
bool contains_label_token(std::string_view line, std::string_view token);

}  // namespace tgr
