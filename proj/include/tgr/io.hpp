#pragma once

// JSON and CSV codecs for the toolkit's dataset files.
//
// Readers take the stream plus a source name used in error messages; every
// error names the file, the 1-based line and, when known, the record id.
// Writers emit one compact JSON object per line with a fixed key order.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tgr/attention.hpp"
#include "tgr/behavior.hpp"
#include "tgr/corpus.hpp"
#include "tgr/grpo.hpp"
#include "tgr/metrics.hpp"
#include "tgr/reward.hpp"

namespace tgr {

/// {id, question, choices, ground_truth, completion}. `choices` is either a list
/// of labels or a list of {label, text} objects.
struct CompletionRecord {
  std::string id;
  std::string question;
  std::vector<Choice> choices;
  std::string ground_truth;
  std::string completion;

  std::vector<std::string> labels() const;
};

std::vector<CompletionRecord> read_completions(std::istream& in, std::string_view source);

/// {"id":..,"r_answer":..,"r_tg":..,"total":..,"k":..}
std::string score_line(std::string_view id, const RewardBreakdown& score);

/// {id, pred_start, pred_end, ref_start, ref_end}
std::vector<GroundingPrediction> read_grounding_predictions(std::istream& in,
                                                            std::string_view source);
nlohmann::ordered_json grounding_report_json(const GroundingReport& report,
                                             const GroundingConfig& cfg);
/// id,pred_start,pred_end,ref_start,ref_end,iou,sed_match
std::string grounding_items_csv(std::span<const GroundingPrediction> preds,
                                const GroundingConfig& cfg);

/// {audio_ref, duration, words: [{word, start, end, confidence?}]}
std::vector<TimedTranscript> read_transcripts(std::istream& in, std::string_view source);
/// {audio_ref, question, answer, t_start, t_end, template_id}
std::string instance_line(const StaInstance& instance);

struct AudioEntry {
  std::string id;
  std::string audio_path;
  double duration = 0.0;
};

/// {id, audio_path, duration}
std::vector<AudioEntry> read_audio_manifest(std::istream& in, std::string_view source);

nlohmann::ordered_json behavior_report_json(const BehaviorReport& report);

/// {"tasks": [{audio_len, question, choices, ground_truth, gold_index,
///             segments: [{start, end, label}]}]}
std::vector<SyntheticTask> read_environment(std::istream& in, std::string_view source);
nlohmann::ordered_json environment_json(std::span<const SyntheticTask> env);

/// Final policy: parameters, probabilities and modal trajectory per task.
nlohmann::ordered_json policy_json(const SoftmaxPolicy& policy, std::span<const SyntheticTask> env,
                                   const TrainConfig& cfg);

/// Attention sidecar: {ranges: [{block, start_idx, end_idx}], phases: [..]}.
struct AttentionSidecar {
  SemanticBlockMap blocks;
  std::vector<std::string> phases;
};

AttentionSidecar read_attention_sidecar(std::istream& in, std::string_view source);
nlohmann::ordered_json attention_sidecar_json(std::span<const SemanticBlockMap::Range> ranges,
                                              std::span<const std::string> phases);

}  // namespace tgr
