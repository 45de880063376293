#include "tgr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tgr/errors.hpp"

namespace tgr {

namespace {

void validate(const SedConfig& cfg) {
  if (!(cfg.onset_collar > 0.0) || !std::isfinite(cfg.onset_collar))
    throw ValidationError("SED onset collar must be positive");
  if (!(cfg.offset_tolerance >= 0.0) || !std::isfinite(cfg.offset_tolerance))
    throw ValidationError("SED offset tolerance must be non-negative");
}

double harmonic_f1(double precision, double recall) {
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

std::vector<std::size_t> onset_order(std::span<const TimeInterval> events) {
  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (events[a].start() != events[b].start()) return events[a].start() < events[b].start();
    return events[a].end() < events[b].end();
  });
  return order;
}

}  // namespace

double interval_iou(const TimeInterval& a, const TimeInterval& b) {
  const double inter = std::max(0.0, std::min(a.end(), b.end()) - std::max(a.start(), b.start()));
  const double uni = a.length() + b.length() - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double high_overlap_rate(std::span<const GroundingPrediction> preds, double threshold) {
  if (preds.empty()) throw ValidationError("high_overlap_rate needs at least one prediction");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ValidationError("IoU threshold must lie in [0, 1]");
  const auto hits = std::count_if(preds.begin(), preds.end(), [&](const GroundingPrediction& p) {
    return interval_iou(p.predicted, p.reference) >= threshold;
  });
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

bool sed_events_match(const TimeInterval& predicted, const TimeInterval& reference,
                      const SedConfig& cfg) {
  const double offset_window = std::max(cfg.onset_collar, cfg.offset_tolerance * reference.length());
  return std::abs(predicted.start() - reference.start()) <= cfg.onset_collar &&
         std::abs(predicted.end() - reference.end()) <= offset_window;
}

SedScore sed_f1(std::span<const TimeInterval> predicted_events,
                std::span<const TimeInterval> reference_events, const SedConfig& cfg) {
  validate(cfg);
  const auto pred_order = onset_order(predicted_events);
  const auto ref_order = onset_order(reference_events);
  std::vector<bool> taken(reference_events.size(), false);

  SedScore score;
  for (std::size_t p : pred_order) {
    for (std::size_t r : ref_order) {
      if (taken[r] || !sed_events_match(predicted_events[p], reference_events[r], cfg)) continue;
      taken[r] = true;
      ++score.true_positives;
      break;
    }
  }
  score.false_positives = predicted_events.size() - score.true_positives;
  score.false_negatives = reference_events.size() - score.true_positives;
  score.precision = predicted_events.empty()
                        ? 0.0
                        : static_cast<double>(score.true_positives) / predicted_events.size();
  score.recall = reference_events.empty()
                     ? 0.0
                     : static_cast<double>(score.true_positives) / reference_events.size();
  score.f1 = harmonic_f1(score.precision, score.recall);
  return score;
}

GroundingReport evaluate_grounding(std::span<const GroundingPrediction> preds,
                                   const GroundingConfig& cfg) {
  if (preds.empty()) throw ValidationError("evaluate_grounding needs at least one prediction");
  validate(cfg.sed);

  GroundingReport report;
  report.n = preds.size();
  double iou_sum = 0.0;
  std::size_t tp = 0;
  for (const auto& p : preds) {
    iou_sum += interval_iou(p.predicted, p.reference);
    if (sed_events_match(p.predicted, p.reference, cfg.sed)) ++tp;
  }
  const double n = static_cast<double>(preds.size());
  report.mean_iou = iou_sum / n;
  // One predicted and one reference event per pair: P = R = TP / n.
  const double rate = static_cast<double>(tp) / n;
  report.f1 = harmonic_f1(rate, rate);
  report.high_overlap_rate = high_overlap_rate(preds, cfg.iou_threshold);
  return report;
}

}  // namespace tgr
