#include "tgr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string_view>

#include "CLI11.hpp"
#include "json.hpp"
#include "tgr/attention.hpp"
#include "tgr/behavior.hpp"
#include "tgr/config.hpp"
#include "tgr/corpus.hpp"
#include "tgr/errors.hpp"
#include "tgr/grpo.hpp"
#include "tgr/io.hpp"
#include "tgr/metrics.hpp"
#include "tgr/protocol.hpp"
#include "tgr/reward.hpp"
#include "tgr/trace.hpp"

namespace tgr::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Context {
  std::ostream& out;
  std::ostream& err;
  ToolkitConfig cfg;
};

template <typename T>
void override_if_set(const CLI::Option* opt, const T& value, T& target) {
  if (opt->count() > 0) target = value;
}

std::string pick_path(const std::string& flag, const std::string& from_config, const char* what) {
  const std::string& path = flag.empty() ? from_config : flag;
  if (path.empty()) throw ValidationError(std::string("no ") + what + " path given");
  return path;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input file '" + path + "'");
  return in;
}

void refuse_overwrite(const std::string& output, std::initializer_list<std::string> inputs) {
  if (output == "-" || !fs::exists(output)) return;
  for (const auto& input : inputs) {
    std::error_code ec;
    if (!input.empty() && fs::equivalent(output, input, ec))
      throw ValidationError("output '" + output + "' would overwrite input '" + input + "'");
  }
}

void write_output(Context& ctx, const std::string& path, const std::string& content) {
  if (path == "-") {
    ctx.out << content;
    ctx.out.flush();
    return;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open output file '" + path + "'");
  file << content;
  file.close();
  if (!file) throw IoError("failed writing output file '" + path + "'");
}

std::string json_document(const ordered_json& j) { return j.dump(2) + "\n"; }

// -- build-corpus ---------------------------------------------------------------

struct BuildCorpusArgs {
  std::string input, output = "-", summary;
  std::vector<std::string> templates;
  std::uint64_t seed = 0;
  std::size_t max_per_transcript = 0;
  double confidence_threshold = 0.0;
  CLI::Option *templates_opt, *seed_opt, *max_opt, *conf_opt;
};

void build_corpus_cmd(Context& ctx, const BuildCorpusArgs& a) {
  CorpusConfig corpus = ctx.cfg.corpus;
  if (a.templates_opt->count() > 0) {
    corpus.templates.clear();
    for (const auto& t : a.templates) corpus.templates.push_back(template_from_string(t));
  }
  override_if_set(a.seed_opt, a.seed, corpus.seed);
  override_if_set(a.max_opt, a.max_per_transcript, corpus.max_per_transcript);
  override_if_set(a.conf_opt, a.confidence_threshold, corpus.confidence_threshold);
  corpus.validate();

  const std::string input = pick_path(a.input, ctx.cfg.paths.input, "transcript input");
  refuse_overwrite(a.output, {input});
  auto in = open_input(input);
  const auto transcripts = read_transcripts(in, input);
  const CorpusResult result = build_corpus(transcripts, corpus);

  std::string lines;
  for (const auto& inst : result.instances) lines += instance_line(inst) + "\n";
  write_output(ctx, a.output, lines);

  ordered_json summary;
  summary["transcripts_read"] = result.summary.transcripts_read;
  summary["transcripts_skipped"] = result.summary.transcripts_skipped;
  summary["sentences_below_confidence"] = result.summary.sentences_below_confidence;
  summary["instances_written"] = result.summary.instances_written;
  summary["problems"] = result.summary.problems;
  if (!a.summary.empty()) write_output(ctx, a.summary, json_document(summary));
  for (const auto& p : result.summary.problems) ctx.err << "skipped transcript: " << p << "\n";
}

// -- score --------------------------------------------------------------------------

struct ScoreArgs {
  std::string input, output = "-";
};

void score_cmd(Context& ctx, const ScoreArgs& a) {
  const std::string input = pick_path(a.input, ctx.cfg.paths.input, "completion input");
  refuse_overwrite(a.output, {input});
  auto in = open_input(input);
  const auto records = read_completions(in, input);
  std::string lines;
  for (const auto& r : records) {
    const auto labels = r.labels();
    ReasoningTrace trace;
    try {
      trace = parse_completion(r.completion, labels);
    } catch (const ValidationError& e) {
      throw ValidationError(input + " (id '" + r.id + "'): " + e.what());
    }
    lines += score_line(r.id, total_reward(trace, r.ground_truth, ctx.cfg.reward)) + "\n";
  }
  write_output(ctx, a.output, lines);
}

// -- eval-ts ------------------------------------------------------------------------

struct EvalTsArgs {
  std::string input, output = "-", items_csv;
  double iou_threshold = 0.0, onset_collar = 0.0, offset_tolerance = 0.0;
  CLI::Option *iou_opt, *collar_opt, *tol_opt;
};

void eval_ts_cmd(Context& ctx, const EvalTsArgs& a) {
  GroundingConfig g = ctx.cfg.metrics;
  override_if_set(a.iou_opt, a.iou_threshold, g.iou_threshold);
  override_if_set(a.collar_opt, a.onset_collar, g.sed.onset_collar);
  override_if_set(a.tol_opt, a.offset_tolerance, g.sed.offset_tolerance);
  const std::string input = pick_path(a.input, ctx.cfg.paths.input, "prediction input");
  refuse_overwrite(a.output, {input});
  if (!a.items_csv.empty()) refuse_overwrite(a.items_csv, {input});
  auto in = open_input(input);
  const auto preds = read_grounding_predictions(in, input);
  const auto report = evaluate_grounding(preds, g);
  write_output(ctx, a.output, json_document(grounding_report_json(report, g)));
  if (!a.items_csv.empty()) write_output(ctx, a.items_csv, grounding_items_csv(preds, g));
}

// -- eval-behavior ------------------------------------------------------------------

struct EvalBehaviorArgs {
  std::string input, manifest, output = "-", transcriber, judge;
  std::size_t max_in_flight = 0;
  CLI::Option *transcriber_opt, *judge_opt, *inflight_opt;
};

void eval_behavior_cmd(Context& ctx, const EvalBehaviorArgs& a) {
  ProtocolConfig protocols = ctx.cfg.protocols;
  override_if_set(a.transcriber_opt, a.transcriber, protocols.transcriber);
  override_if_set(a.judge_opt, a.judge, protocols.judge);
  override_if_set(a.inflight_opt, a.max_in_flight, protocols.max_in_flight);
  if (protocols.max_in_flight == 0) throw ValidationError("--max-in-flight must be >= 1");

  const std::string input = pick_path(a.input, ctx.cfg.paths.input, "completion input");
  const std::string manifest_path = a.manifest.empty() ? ctx.cfg.paths.manifest : a.manifest;
  refuse_overwrite(a.output, {input, manifest_path});
  auto in = open_input(input);
  const auto records = read_completions(in, input);

  std::map<std::string, AudioEntry> manifest;
  if (!manifest_path.empty()) {
    auto min = open_input(manifest_path);
    for (auto& e : read_audio_manifest(min, manifest_path)) {
      if (manifest.contains(e.id))
        throw ValidationError(manifest_path + ": duplicate manifest id '" + e.id + "'");
      std::string id = e.id;
      manifest.emplace(std::move(id), std::move(e));
    }
  }
  if (!protocols.transcriber.empty() && manifest_path.empty())
    throw ValidationError("audiology verification needs an audio manifest (--manifest)");

  std::vector<BehaviorSample> samples;
  for (const auto& r : records) {
    BehaviorSample s;
    s.id = r.id;
    s.question = r.question;
    for (const auto& c : r.choices) s.choices.push_back(c.text.empty() ? c.label : "(" + c.label + ") " + c.text);
    try {
      s.trace = parse_completion(r.completion, r.labels());
    } catch (const ValidationError& e) {
      throw ValidationError(input + " (id '" + r.id + "'): " + e.what());
    }
    if (!protocols.transcriber.empty()) {
      auto it = manifest.find(r.id);
      if (it == manifest.end())
        throw ValidationError(manifest_path + ": no audio entry for id '" + r.id + "'");
      s.audio_ref = it->second.audio_path;
      s.duration = it->second.duration;
    }
    samples.push_back(std::move(s));
  }

  std::unique_ptr<WireTranscriber> transcriber;
  std::unique_ptr<WireJudge> judge;
  if (!protocols.transcriber.empty())
    transcriber = std::make_unique<WireTranscriber>(open_channel(protocols.transcriber));
  if (!protocols.judge.empty()) judge = std::make_unique<WireJudge>(open_channel(protocols.judge));

  const auto report = behavior_report(samples, transcriber.get(), judge.get(),
                                      BehaviorOptions{protocols.max_in_flight});
  write_output(ctx, a.output, json_document(behavior_report_json(report)));
}

// -- train-toy ----------------------------------------------------------------------

struct TrainToyArgs {
  std::string env, output = "-", policy;
  std::size_t group_size = 0, steps = 0;
  double epsilon = 0.0, beta = 0.0, learning_rate = 0.0, temperature = 0.0;
  std::uint64_t seed = 0;
  std::string parametrization;
  CLI::Option *g_opt, *steps_opt, *eps_opt, *beta_opt, *lr_opt, *temp_opt, *seed_opt, *param_opt;
};

void train_toy_cmd(Context& ctx, const TrainToyArgs& a) {
  TrainConfig t = ctx.cfg.grpo;
  override_if_set(a.g_opt, a.group_size, t.group_size);
  override_if_set(a.steps_opt, a.steps, t.steps);
  override_if_set(a.eps_opt, a.epsilon, t.epsilon);
  override_if_set(a.beta_opt, a.beta, t.beta);
  override_if_set(a.lr_opt, a.learning_rate, t.learning_rate);
  override_if_set(a.temp_opt, a.temperature, t.temperature);
  override_if_set(a.seed_opt, a.seed, t.seed);
  if (a.param_opt->count() > 0) t.parametrization = parametrization_from_string(a.parametrization);
  t.validate();

  std::vector<SyntheticTask> env;
  const std::string env_path = a.env.empty() ? ctx.cfg.paths.environment : a.env;
  if (env_path.empty()) {
    env = default_environment();
  } else {
    refuse_overwrite(a.output, {env_path});
    if (!a.policy.empty()) refuse_overwrite(a.policy, {env_path});
    auto in = open_input(env_path);
    env = read_environment(in, env_path);
  }
  const TrainResult result = train_toy_policy(env, t);
  write_output(ctx, a.output, training_log_csv(result.log));
  if (!a.policy.empty()) write_output(ctx, a.policy, json_document(policy_json(result.policy, env, t)));
}

// -- attn-report --------------------------------------------------------------------

struct AttnReportArgs {
  std::string input, sidecar, baseline, output = "-", csv;
  double min_increase = 0.0;
};

ordered_json profile_json(const LayerProfile& p) {
  ordered_json j = ordered_json::object();
  for (const auto& [layer, v] : p) j[std::to_string(layer)] = v;
  return j;
}

std::vector<AttentionRecord> load_export(const std::string& path, const AttentionSidecar& sidecar) {
  auto in = open_input(path);
  try {
    return read_attention_export(in, sidecar.phases);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void attn_report_cmd(Context& ctx, const AttnReportArgs& a) {
  const std::string input = pick_path(a.input, ctx.cfg.paths.input, "attention export");
  const std::string sidecar_path = pick_path(a.sidecar, ctx.cfg.paths.sidecar, "block-map sidecar");
  refuse_overwrite(a.output, {input, sidecar_path, a.baseline});
  if (!a.csv.empty()) refuse_overwrite(a.csv, {input, sidecar_path, a.baseline});
  auto sin = open_input(sidecar_path);
  const AttentionSidecar sidecar = read_attention_sidecar(sin, sidecar_path);
  const auto records = load_export(input, sidecar);
  if (records.empty()) throw ValidationError(input + ": attention export holds no records");
  for (const auto& r : records) {
    try {
      validate_record(r, sidecar.blocks.size());
    } catch (const ValidationError& e) {
      throw ValidationError(input + ": " + e.what());
    }
  }

  ordered_json report;
  report["n_records"] = records.size();
  ordered_json counts = ordered_json::object();
  for (Block b : kAllBlocks) counts[std::string(to_string(b))] = sidecar.blocks.count(b);
  report["block_token_counts"] = counts;

  ordered_json means = ordered_json::object();
  for (auto mode : {AggregationMode::summed, AggregationMode::per_token}) {
    BlockValues total{};
    for (const auto& r : records) {
      const auto v = block_aggregate(r, sidecar.blocks, mode);
      for (std::size_t b = 0; b < kBlockCount; ++b) total[b] += v[b];
    }
    ordered_json m = ordered_json::object();
    for (Block b : kAllBlocks)
      m[std::string(to_string(b))] = total[static_cast<std::size_t>(b)] / static_cast<double>(records.size());
    means[mode == AggregationMode::summed ? "summed" : "per_token"] = m;
  }
  report["mean_block_attention"] = means;

  if (sidecar.blocks.count(Block::system) > 0 && sidecar.blocks.count(Block::audio) > 0) {
    const double ratio = attention_sink_ratio(records, sidecar.blocks);
    report["sink_ratio"] = std::isfinite(ratio) ? ordered_json(ratio) : ordered_json(nullptr);
  }

  const auto summed = layerwise_audio_attention(records, sidecar.blocks, std::nullopt, AggregationMode::summed);
  const auto per_token =
      layerwise_audio_attention(records, sidecar.blocks, std::nullopt, AggregationMode::per_token);
  report["layer_audio_attention"] = {{"summed", profile_json(summed)},
                                     {"per_token", profile_json(per_token)}};

  std::string csv = "phase,layer,audio_summed,audio_per_token\n";
  auto add_rows = [&](const std::string& phase, const LayerProfile& s, const LayerProfile& p) {
    for (const auto& [layer, v] : s) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g\n", layer, v, p.at(layer));
      csv += phase + "," + buf;
    }
  };
  add_rows("all", summed, per_token);

  const bool tagged = std::all_of(records.begin(), records.end(), [](const auto& r) { return r.phase.has_value(); });
  if (tagged) {
    report["phase_audio_attention"] = {
        {"summed", phase_report(records, sidecar.blocks, AggregationMode::summed)},
        {"per_token", phase_report(records, sidecar.blocks, AggregationMode::per_token)}};
  }
  ordered_json by_phase = ordered_json::object();
  for (const auto& phase : sidecar.phases) {
    const bool present = std::any_of(records.begin(), records.end(), [&](const auto& r) { return r.phase == phase; });
    if (!present) continue;
    const auto ps = layerwise_audio_attention(records, sidecar.blocks, phase, AggregationMode::summed);
    const auto pp = layerwise_audio_attention(records, sidecar.blocks, phase, AggregationMode::per_token);
    by_phase[phase] = {{"summed", profile_json(ps)}, {"per_token", profile_json(pp)}};
    add_rows(phase, ps, pp);
  }
  if (!by_phase.empty()) report["layer_audio_attention_by_phase"] = by_phase;

  if (!a.baseline.empty()) {
    const auto base = load_export(a.baseline, sidecar);
    const auto base_profile =
        layerwise_audio_attention(base, sidecar.blocks, std::nullopt, AggregationMode::summed);
    const auto deltas = layer_deltas(summed, base_profile);
    report["layer_deltas"] = profile_json(deltas);
    report["picking_points"] = picking_points(deltas, a.min_increase);
  }

  write_output(ctx, a.output, json_document(report));
  if (!a.csv.empty()) write_output(ctx, a.csv, csv);
}

// -- error reporting ----------------------------------------------------------------

int report_error(Context& ctx, bool json_errors, int code, std::string_view kind,
                 const std::string& message) {
  if (json_errors) {
    ordered_json j;
    j["error"] = {{"kind", kind}, {"message", message}, {"exit_code", code}};
    ctx.err << j.dump() << "\n";
  } else {
    ctx.err << "tgr: " << kind << " error: " << message << "\n";
  }
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Context ctx{out, err, {}};
  bool json_errors = false;
  for (int i = 1; i < argc; ++i)
    if (std::string_view(argv[i]) == "--json") json_errors = true;

  CLI::App app{"Timestamp-grounded reasoning toolkit", "tgr"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "Configuration file (section.key = value)");
  app.add_flag("--json", json_errors, "Print errors as one JSON object on stderr");

  BuildCorpusArgs bc;
  auto* bc_cmd = app.add_subcommand("build-corpus", "Build timestamp QA instances from word-timed transcripts");
  bc_cmd->add_option("-i,--input", bc.input, "Transcript JSONL");
  bc_cmd->add_option("-o,--output", bc.output, "Instance JSONL ('-' for stdout)");
  bc.templates_opt = bc_cmd->add_option("--template", bc.templates, "omni or flamingo (repeatable)");
  bc.seed_opt = bc_cmd->add_option("--seed", bc.seed, "Sampling seed");
  bc.max_opt = bc_cmd->add_option("--max-per-transcript", bc.max_per_transcript, "Sentences sampled per transcript");
  bc.conf_opt = bc_cmd->add_option("--confidence-threshold", bc.confidence_threshold, "Minimum mean word confidence");
  bc_cmd->add_option("--summary", bc.summary, "Write a JSON run summary here");

  ScoreArgs sc;
  auto* sc_cmd = app.add_subcommand("score", "Score completions with the answer and grounding rewards");
  sc_cmd->add_option("-i,--input", sc.input, "Completion JSONL");
  sc_cmd->add_option("-o,--output", sc.output, "Score JSONL ('-' for stdout)");

  EvalTsArgs ts;
  auto* ts_cmd = app.add_subcommand("eval-ts", "Evaluate predicted timestamps against references");
  ts_cmd->add_option("-i,--input", ts.input, "Prediction JSONL");
  ts_cmd->add_option("-o,--output", ts.output, "Report JSON ('-' for stdout)");
  ts_cmd->add_option("--items-csv", ts.items_csv, "Per-item CSV");
  ts.iou_opt = ts_cmd->add_option("--iou-threshold", ts.iou_threshold, "High-overlap IoU threshold");
  ts.collar_opt = ts_cmd->add_option("--onset-collar", ts.onset_collar, "SED onset collar (seconds)");
  ts.tol_opt = ts_cmd->add_option("--offset-tolerance", ts.offset_tolerance, "SED offset tolerance (fraction)");

  EvalBehaviorArgs eb;
  auto* eb_cmd = app.add_subcommand("eval-behavior", "Regions explored, audiology verification, consistency");
  eb_cmd->add_option("-i,--input", eb.input, "Completion JSONL");
  eb_cmd->add_option("--manifest", eb.manifest, "Audio manifest JSONL {id, audio_path, duration}");
  eb_cmd->add_option("-o,--output", eb.output, "Report JSON ('-' for stdout)");
  eb.transcriber_opt = eb_cmd->add_option("--transcriber", eb.transcriber, "Transcriber endpoint descriptor");
  eb.judge_opt = eb_cmd->add_option("--judge", eb.judge, "Judge endpoint descriptor");
  eb.inflight_opt = eb_cmd->add_option("--max-in-flight", eb.max_in_flight, "Concurrent protocol calls");

  TrainToyArgs tt;
  auto* tt_cmd = app.add_subcommand("train-toy", "Train the enumerable toy policy with GRPO");
  tt_cmd->add_option("--env", tt.env, "Environment JSON (default: built-in four-task environment)");
  tt_cmd->add_option("-o,--output", tt.output, "Training log CSV ('-' for stdout)");
  tt_cmd->add_option("--policy", tt.policy, "Final policy JSON");
  tt.g_opt = tt_cmd->add_option("-G,--group-size", tt.group_size, "Samples per group");
  tt.eps_opt = tt_cmd->add_option("--epsilon", tt.epsilon, "Clipping range");
  tt.beta_opt = tt_cmd->add_option("--beta", tt.beta, "KL coefficient");
  tt.lr_opt = tt_cmd->add_option("--learning-rate", tt.learning_rate, "Gradient ascent step size");
  tt.steps_opt = tt_cmd->add_option("--steps", tt.steps, "Training steps");
  tt.seed_opt = tt_cmd->add_option("--seed", tt.seed, "Sampling seed");
  tt.temp_opt = tt_cmd->add_option("--temperature", tt.temperature, "Softmax temperature");
  tt.param_opt = tt_cmd->add_option("--parametrization", tt.parametrization, "factored or tabular");

  AttnReportArgs ar;
  auto* ar_cmd = app.add_subcommand("attn-report", "Semantic-block attention report from an export file");
  ar_cmd->add_option("-i,--input", ar.input, "Attention export (TGRATTN1)");
  ar_cmd->add_option("--sidecar", ar.sidecar, "Block-map sidecar JSON");
  ar_cmd->add_option("--baseline", ar.baseline, "Export of the reference model for layer deltas");
  ar_cmd->add_option("--min-increase", ar.min_increase, "Delta above which a layer is a picking point");
  ar_cmd->add_option("-o,--output", ar.output, "Report JSON ('-' for stdout)");
  ar_cmd->add_option("--csv", ar.csv, "Layer profile CSV");

  for (int i = 1; i < argc; ++i) {
    const std::string_view arg(argv[i]);
    if (arg == "--config") {
      ++i;
      continue;
    }
    if (arg.starts_with("-")) continue;
    const auto subs = app.get_subcommands([&](const CLI::App* sub) { return sub->get_name() == arg; });
    if (subs.empty()) {
      const std::string message = "unknown subcommand '" + std::string(arg) + "'";
      if (json_errors) return report_error(ctx, true, kExitValidation, "usage", message);
      err << "tgr: " << message << "\n\n" << app.help();
      return kExitValidation;
    }
    break;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    std::string usage = app.help();
    if (json_errors) return report_error(ctx, true, kExitValidation, "usage", e.what());
    err << "tgr: " << e.what() << "\n\n" << usage;
    return kExitValidation;
  }

  try {
    if (!config_path.empty()) ctx.cfg = load_config(config_path);
    apply_env_overrides(ctx.cfg);
    if (bc_cmd->parsed()) build_corpus_cmd(ctx, bc);
    else if (sc_cmd->parsed()) score_cmd(ctx, sc);
    else if (ts_cmd->parsed()) eval_ts_cmd(ctx, ts);
    else if (eb_cmd->parsed()) eval_behavior_cmd(ctx, eb);
    else if (tt_cmd->parsed()) train_toy_cmd(ctx, tt);
    else if (ar_cmd->parsed()) attn_report_cmd(ctx, ar);
  } catch (const ValidationError& e) {
    return report_error(ctx, json_errors, kExitValidation, "validation", e.what());
  } catch (const ProtocolError& e) {
    return report_error(ctx, json_errors, kExitProtocol, "protocol", e.what());
  } catch (const IoError& e) {
    return report_error(ctx, json_errors, kExitProtocol, "io", e.what());
  } catch (const std::exception& e) {
    return report_error(ctx, json_errors, kExitProtocol, "internal", e.what());
  }
  return kExitOk;
}

}  // namespace tgr::cli
