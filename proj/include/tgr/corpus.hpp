#pragma once

// Stage-1 supervised timestamp alignment (STA) instances and the Stage-2
// grounded-reasoning instruction, built from word-level timed transcripts.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tgr/trace.hpp"

namespace tgr {

struct TimedWord {
  std::string word;
  double start = 0.0;
  double end = 0.0;
  std::optional<double> confidence;
};

struct TimedTranscript {
  std::string audio_ref;
  std::vector<TimedWord> words;
  double duration = 0.0;

  /// Throws ValidationError naming the offending word.
  void validate() const;
};

struct Sentence {
  std::string text;
  TimeInterval interval;
  std::size_t first_word = 0;
  std::size_t word_count = 0;
  std::optional<double> mean_confidence;
};

struct SegmentationConfig {
  /// A comma ends a sentence when the next word starts more than this many seconds later.
  double comma_pause = 0.5;
};

/// Splits after words ending in . ? ! and after commas followed by a long pause.
/// Every word lands in exactly one sentence.
std::vector<Sentence> segment_sentences(const TimedTranscript& transcript,
                                        const SegmentationConfig& cfg = {});

enum class TemplateId { omni, flamingo };

std::string_view to_string(TemplateId id);
TemplateId template_from_string(std::string_view name);

struct StaInstance {
  std::string audio_ref;
  std::string sentence;
  TimeInterval interval;  // endpoints rounded half-up to hundredths
  std::string question;
  std::string answer;
  TemplateId template_id = TemplateId::omni;
};

StaInstance render_sta_instance(std::string_view sentence, const TimeInterval& interval,
                                TemplateId template_id, std::string_view audio_ref = {});

struct Choice {
  std::string label;
  std::string text;
};

/// Question, one "(L) text" line per choice, then the timestamp-grounded
/// reasoning instruction. Throws ValidationError on empty choices.
std::string render_stage2_instruction(std::string_view question, std::span<const Choice> choices);

struct CorpusConfig {
  std::vector<TemplateId> templates{TemplateId::omni};
  std::uint64_t seed = 0;
  std::size_t max_per_transcript = 4;
  /// Sentences whose mean word confidence is below this are dropped.
  double confidence_threshold = 0.5;
  SegmentationConfig segmentation;

  void validate() const;
};

/// Sentences that pass the confidence gate (words without confidence do not vote).
std::vector<Sentence> eligible_sentences(const TimedTranscript& transcript,
                                         const CorpusConfig& cfg);

/// Instances for one transcript: up to max_per_transcript sentences sampled
/// uniformly without replacement (stream seeded by (seed, index)), emitted in
/// timeline order, one instance per configured template.
std::vector<StaInstance> instances_for_transcript(const TimedTranscript& transcript,
                                                  std::size_t index, const CorpusConfig& cfg);

struct CorpusSummary {
  std::size_t transcripts_read = 0;
  std::size_t transcripts_skipped = 0;
  std::size_t sentences_below_confidence = 0;
  std::size_t instances_written = 0;
  std::vector<std::string> problems;
};

struct CorpusResult {
  std::vector<StaInstance> instances;
  CorpusSummary summary;
};

/// Invalid transcripts are skipped and reported in the summary.
CorpusResult build_corpus(std::span<const TimedTranscript> transcripts, const CorpusConfig& cfg);

}  // namespace tgr
