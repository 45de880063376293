#include "tgr/io.hpp"

#include <cstdio>
#include <functional>
#include <istream>

#include "tgr/errors.hpp"

namespace tgr {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string locate(std::string_view source, std::size_t line, const std::string& id = {}) {
  std::string where = std::string(source) + ":" + std::to_string(line);
  if (!id.empty()) where += " (id '" + id + "')";
  return where;
}

void for_each_json_line(std::istream& in, std::string_view source,
                        const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json value;
    try {
      value = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(locate(source, number) + ": invalid JSON: " + e.what());
    }
    if (!value.is_object()) throw ValidationError(locate(source, number) + ": expected a JSON object");
    fn(value, number);
  }
  if (in.bad()) throw IoError("read error on " + std::string(source));
}

const json& field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + ": missing field \"" + key + "\"");
  return *it;
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) throw ValidationError(where + ": field \"" + key + "\" must be a string");
  return v.get<std::string>();
}

double number_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) throw ValidationError(where + ": field \"" + key + "\" must be a number");
  return v.get<double>();
}

/// Record ids may be strings or integers; integers are kept in decimal form.
std::string id_field(const json& obj, const std::string& where) {
  const json& v = field(obj, "id", where);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return v.dump();
  throw ValidationError(where + ": field \"id\" must be a string or an integer");
}

TimeInterval interval_from(double start, double end, const std::string& where, const char* what) {
  try {
    return TimeInterval(start, end);
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + what + " interval: " + e.what());
  }
}

std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_text(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<std::string> CompletionRecord::labels() const {
  std::vector<std::string> out;
  out.reserve(choices.size());
  for (const auto& c : choices) out.push_back(c.label);
  return out;
}

std::vector<CompletionRecord> read_completions(std::istream& in, std::string_view source) {
  std::vector<CompletionRecord> records;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line) {
    CompletionRecord r;
    r.id = id_field(obj, locate(source, line));
    const std::string where = locate(source, line, r.id);
    r.question = obj.contains("question") ? string_field(obj, "question", where) : std::string();
    const json& choices = field(obj, "choices", where);
    if (!choices.is_array() || choices.empty())
      throw ValidationError(where + ": \"choices\" must be a non-empty array");
    for (const auto& c : choices) {
      if (c.is_string()) {
        r.choices.push_back({c.get<std::string>(), {}});
      } else if (c.is_object()) {
        r.choices.push_back({string_field(c, "label", where),
                             c.contains("text") ? string_field(c, "text", where) : std::string()});
      } else {
        throw ValidationError(where + ": each choice must be a label string or {label, text}");
      }
    }
    r.ground_truth = string_field(obj, "ground_truth", where);
    r.completion = string_field(obj, "completion", where);
    records.push_back(std::move(r));
  });
  return records;
}

std::string score_line(std::string_view id, const RewardBreakdown& score) {
  ordered_json j;
  j["id"] = id;
  j["r_answer"] = score.r_answer;
  j["r_tg"] = score.r_tg;
  j["total"] = score.total;
  j["k"] = score.k;
  return j.dump();
}

std::vector<GroundingPrediction> read_grounding_predictions(std::istream& in,
                                                            std::string_view source) {
  std::vector<GroundingPrediction> preds;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line) {
    GroundingPrediction p;
    p.id = id_field(obj, locate(source, line));
    const std::string where = locate(source, line, p.id);
    p.predicted = interval_from(number_field(obj, "pred_start", where),
                                number_field(obj, "pred_end", where), where, "predicted");
    p.reference = interval_from(number_field(obj, "ref_start", where),
                                number_field(obj, "ref_end", where), where, "reference");
    preds.push_back(std::move(p));
  });
  return preds;
}

ordered_json grounding_report_json(const GroundingReport& report, const GroundingConfig& cfg) {
  ordered_json j;
  j["n"] = report.n;
  j["mean_iou"] = report.mean_iou;
  j["sed_f1"] = report.f1;
  j["high_overlap_rate"] = report.high_overlap_rate;
  j["iou_threshold"] = cfg.iou_threshold;
  j["onset_collar"] = cfg.sed.onset_collar;
  j["offset_tolerance"] = cfg.sed.offset_tolerance;
  return j;
}

std::string grounding_items_csv(std::span<const GroundingPrediction> preds,
                                const GroundingConfig& cfg) {
  std::string out = "id,pred_start,pred_end,ref_start,ref_end,iou,sed_match\n";
  for (const auto& p : preds) {
    out += csv_text(p.id) + "," + csv_number(p.predicted.start()) + "," +
           csv_number(p.predicted.end()) + "," + csv_number(p.reference.start()) + "," +
           csv_number(p.reference.end()) + "," + csv_number(interval_iou(p.predicted, p.reference)) +
           "," + (sed_events_match(p.predicted, p.reference, cfg.sed) ? "1" : "0") + "\n";
  }
  return out;
}

std::vector<TimedTranscript> read_transcripts(std::istream& in, std::string_view source) {
  std::vector<TimedTranscript> out;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line) {
    TimedTranscript t;
    t.audio_ref = string_field(obj, "audio_ref", locate(source, line));
    const std::string where = locate(source, line) + " (audio_ref '" + t.audio_ref + "')";
    t.duration = number_field(obj, "duration", where);
    const json& words = field(obj, "words", where);
    if (!words.is_array()) throw ValidationError(where + ": \"words\" must be an array");
    for (const auto& w : words) {
      if (!w.is_object()) throw ValidationError(where + ": each word must be an object");
      TimedWord tw;
      tw.word = string_field(w, "word", where);
      tw.start = number_field(w, "start", where);
      tw.end = number_field(w, "end", where);
      if (w.contains("confidence") && !w["confidence"].is_null())
        tw.confidence = number_field(w, "confidence", where);
      t.words.push_back(std::move(tw));
    }
    out.push_back(std::move(t));
  });
  return out;
}

std::string instance_line(const StaInstance& instance) {
  ordered_json j;
  j["audio_ref"] = instance.audio_ref;
  j["question"] = instance.question;
  j["answer"] = instance.answer;
  j["t_start"] = instance.interval.start();
  j["t_end"] = instance.interval.end();
  j["template_id"] = to_string(instance.template_id);
  return j.dump();
}

std::vector<AudioEntry> read_audio_manifest(std::istream& in, std::string_view source) {
  std::vector<AudioEntry> out;
  for_each_json_line(in, source, [&](const json& obj, std::size_t line) {
    AudioEntry e;
    e.id = id_field(obj, locate(source, line));
    const std::string where = locate(source, line, e.id);
    e.audio_path = string_field(obj, "audio_path", where);
    e.duration = number_field(obj, "duration", where);
    if (!(e.duration >= 0.0)) throw ValidationError(where + ": duration must be non-negative");
    out.push_back(std::move(e));
  });
  return out;
}

ordered_json behavior_report_json(const BehaviorReport& report) {
  ordered_json j;
  j["n_examples"] = report.n_examples;
  j["regions_explored"] = report.regions_explored;
  if (report.audiology_verify) j["audiology_verify"] = *report.audiology_verify;
  if (report.consistency) j["consistency"] = *report.consistency;
  return j;
}

std::vector<SyntheticTask> read_environment(std::istream& in, std::string_view source) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string(source) + ": invalid JSON: " + e.what());
  }
  const std::string root = std::string(source);
  if (!doc.is_object()) throw ValidationError(root + ": expected an object with \"tasks\"");
  const json& tasks = field(doc, "tasks", root);
  if (!tasks.is_array() || tasks.empty())
    throw ValidationError(root + ": \"tasks\" must be a non-empty array");
  std::vector<SyntheticTask> env;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string where = root + ": task " + std::to_string(i);
    const json& t = tasks[i];
    if (!t.is_object()) throw ValidationError(where + ": expected an object");
    SyntheticTask task;
    task.audio_len = number_field(t, "audio_len", where);
    task.question = t.contains("question") ? string_field(t, "question", where) : std::string();
    const json& choices = field(t, "choices", where);
    if (!choices.is_array()) throw ValidationError(where + ": \"choices\" must be an array");
    for (const auto& c : choices) {
      if (!c.is_string()) throw ValidationError(where + ": choices must be label strings");
      task.choices.push_back(c.get<std::string>());
    }
    task.ground_truth = string_field(t, "ground_truth", where);
    const json& gold = field(t, "gold_index", where);
    if (!gold.is_number_unsigned()) throw ValidationError(where + ": \"gold_index\" must be a non-negative integer");
    task.gold_index = gold.get<std::size_t>();
    const json& segments = field(t, "segments", where);
    if (!segments.is_array()) throw ValidationError(where + ": \"segments\" must be an array");
    for (const auto& s : segments) {
      task.segments.push_back({interval_from(number_field(s, "start", where),
                                             number_field(s, "end", where), where, "segment"),
                               s.contains("label") ? string_field(s, "label", where) : std::string()});
    }
    try {
      task.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    env.push_back(std::move(task));
  }
  return env;
}

ordered_json environment_json(std::span<const SyntheticTask> env) {
  ordered_json tasks = ordered_json::array();
  for (const auto& task : env) {
    ordered_json t;
    t["audio_len"] = task.audio_len;
    t["question"] = task.question;
    t["choices"] = task.choices;
    t["ground_truth"] = task.ground_truth;
    t["gold_index"] = task.gold_index;
    ordered_json segs = ordered_json::array();
    for (const auto& s : task.segments)
      segs.push_back({{"start", s.interval.start()}, {"end", s.interval.end()}, {"label", s.label}});
    t["segments"] = std::move(segs);
    tasks.push_back(std::move(t));
  }
  return ordered_json{{"tasks", std::move(tasks)}};
}

ordered_json policy_json(const SoftmaxPolicy& policy, std::span<const SyntheticTask> env,
                         const TrainConfig& cfg) {
  if (policy.task_count() != env.size())
    throw ValidationError("policy and environment disagree on the number of tasks");
  const auto tables = [&] {
    std::vector<std::vector<double>> t;
    for (const auto& task : env) t.push_back(reward_table(task, cfg.reward));
    return t;
  }();
  ordered_json j;
  j["parametrization"] = to_string(cfg.parametrization);
  j["temperature"] = policy.temperature();
  j["expected_reward"] = expected_reward(policy, tables);
  ordered_json tasks = ordered_json::array();
  for (std::size_t i = 0; i < env.size(); ++i) {
    const std::size_t modal = modal_trajectory(policy, i);
    const Trajectory traj = decode_trajectory(env[i], modal);
    std::vector<std::size_t> cited;
    for (std::size_t s = 0; s < env[i].segments.size(); ++s)
      if (traj.grounded & (1u << s)) cited.push_back(s);
    const auto probs = policy.probabilities(i);
    ordered_json t;
    t["parameters"] = policy.parameters().rows[i];
    t["modal_trajectory"] = {{"id", modal},
                             {"answer", env[i].choices[traj.answer]},
                             {"cited_segments", cited},
                             {"probability", probs[modal]},
                             {"reward", tables[i][modal]},
                             {"completion", render_trajectory(env[i], modal)}};
    t["expected_reward"] = [&] {
      double e = 0.0;
      for (std::size_t k = 0; k < probs.size(); ++k) e += probs[k] * tables[i][k];
      return e;
    }();
    tasks.push_back(std::move(t));
  }
  j["tasks"] = std::move(tasks);
  return j;
}

AttentionSidecar read_attention_sidecar(std::istream& in, std::string_view source) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string(source) + ": invalid JSON: " + e.what());
  }
  const std::string where(source);
  if (!doc.is_object()) throw ValidationError(where + ": expected an object");
  const json& ranges = field(doc, "ranges", where);
  if (!ranges.is_array() || ranges.empty())
    throw ValidationError(where + ": \"ranges\" must be a non-empty array");
  std::vector<SemanticBlockMap::Range> parsed;
  for (const auto& r : ranges) {
    const json& s = field(r, "start_idx", where);
    const json& e = field(r, "end_idx", where);
    if (!s.is_number_unsigned() || !e.is_number_unsigned())
      throw ValidationError(where + ": range indices must be non-negative integers");
    parsed.push_back({block_from_string(string_field(r, "block", where)), s.get<std::size_t>(),
                      e.get<std::size_t>()});
  }
  AttentionSidecar sidecar;
  try {
    sidecar.blocks = SemanticBlockMap::from_ranges(parsed);
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  if (doc.contains("phases")) {
    const json& phases = doc["phases"];
    if (!phases.is_array()) throw ValidationError(where + ": \"phases\" must be an array");
    for (const auto& p : phases) {
      if (!p.is_string()) throw ValidationError(where + ": phase names must be strings");
      sidecar.phases.push_back(p.get<std::string>());
    }
  }
  return sidecar;
}

ordered_json attention_sidecar_json(std::span<const SemanticBlockMap::Range> ranges,
                                    std::span<const std::string> phases) {
  ordered_json rs = ordered_json::array();
  for (const auto& r : ranges)
    rs.push_back({{"block", to_string(r.block)}, {"start_idx", r.start_idx}, {"end_idx", r.end_idx}});
  ordered_json j;
  j["ranges"] = std::move(rs);
  j["phases"] = std::vector<std::string>(phases.begin(), phases.end());
  return j;
}

}  // namespace tgr
