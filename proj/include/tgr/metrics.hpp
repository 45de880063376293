#pragma once

// Temporal-grounding evaluation: interval IoU, IoU >= threshold rate and
// event-based SED F1 with an onset collar and offset tolerance.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tgr/trace.hpp"

namespace tgr {

struct GroundingPrediction {
  std::string id;
  TimeInterval predicted;
  TimeInterval reference;
};

struct SedConfig {
  double onset_collar = 0.2;       // seconds
  double offset_tolerance = 0.2;   // fraction of the reference length
};

struct GroundingConfig {
  double iou_threshold = 0.7;
  SedConfig sed;
};

struct SedScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

struct GroundingReport {
  double mean_iou = 0.0;
  double f1 = 0.0;
  double high_overlap_rate = 0.0;
  std::size_t n = 0;
};

/// Length-measure IoU. Two identical zero-length points score 1; a point
/// against anything else scores 0.
double interval_iou(const TimeInterval& a, const TimeInterval& b);

/// Fraction of predictions with IoU >= threshold. Throws ValidationError on empty input.
double high_overlap_rate(std::span<const GroundingPrediction> preds, double threshold);

/// True when `predicted` matches `reference` under the collar/tolerance rule.
bool sed_events_match(const TimeInterval& predicted, const TimeInterval& reference,
                      const SedConfig& cfg);

/// Greedy one-to-one matching: predictions in onset order take the first
/// unmatched reference (in onset order) that satisfies sed_events_match.
SedScore sed_f1(std::span<const TimeInterval> predicted_events,
                std::span<const TimeInterval> reference_events, const SedConfig& cfg);

/// Mean IoU, corpus-wide event F1 (one event per pair) and IoU >= threshold rate.
GroundingReport evaluate_grounding(std::span<const GroundingPrediction> preds,
                                   const GroundingConfig& cfg);

}  // namespace tgr
