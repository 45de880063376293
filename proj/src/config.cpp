#include "tgr/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tgr/errors.hpp"

namespace tgr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T parse_integer(std::string_view value, std::string_view key) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ValidationError("config key '" + std::string(key) + "' expects an integer, got '" +
                          std::string(value) + "'");
  return out;
}

double parse_double(std::string_view value, std::string_view key) {
  const std::string text(value);
  char* end = nullptr;
  const double out = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(out))
    throw ValidationError("config key '" + std::string(key) + "' expects a finite number, got '" +
                          text + "'");
  return out;
}

std::string templates_to_string(const std::vector<TemplateId>& ids) {
  std::string out;
  for (auto id : ids) {
    if (!out.empty()) out += ',';
    out += to_string(id);
  }
  return out;
}

std::vector<TemplateId> templates_from_string(std::string_view value) {
  std::vector<TemplateId> ids;
  while (true) {
    const auto comma = value.find(',');
    ids.push_back(template_from_string(trim(value.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return ids;
}

struct Key {
  std::string name;
  std::function<std::string(const ToolkitConfig&)> get;
  std::function<void(ToolkitConfig&, std::string_view)> set;
};

Key make_key(std::string name, std::function<std::string(const ToolkitConfig&)> get,
             std::function<void(ToolkitConfig&, std::string_view)> set) {
  return Key{std::move(name), std::move(get), std::move(set)};
}

#define TGR_DOUBLE_KEY(key, member)                                              \
  make_key(                                                                      \
      key, [](const ToolkitConfig& c) { return format_double(c.member); },       \
      [](ToolkitConfig& c, std::string_view v) { c.member = parse_double(v, key); })

#define TGR_INT_KEY(key, member, type)                                                 \
  make_key(                                                                            \
      key, [](const ToolkitConfig& c) { return std::to_string(c.member); },            \
      [](ToolkitConfig& c, std::string_view v) { c.member = parse_integer<type>(v, key); })

#define TGR_STRING_KEY(key, member)                            \
  make_key(                                                    \
      key, [](const ToolkitConfig& c) { return c.member; },    \
      [](ToolkitConfig& c, std::string_view v) { c.member = std::string(v); })

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      TGR_INT_KEY("reward.k_ref", reward.k_ref, int),
      TGR_INT_KEY("reward.k_max", reward.k_max, int),
      TGR_DOUBLE_KEY("reward.c_max", reward.c_max),
      TGR_DOUBLE_KEY("reward.c_min", reward.c_min),
      TGR_INT_KEY("grpo.group_size", grpo.group_size, std::size_t),
      TGR_DOUBLE_KEY("grpo.epsilon", grpo.epsilon),
      TGR_DOUBLE_KEY("grpo.beta", grpo.beta),
      TGR_DOUBLE_KEY("grpo.learning_rate", grpo.learning_rate),
      TGR_INT_KEY("grpo.steps", grpo.steps, std::size_t),
      TGR_INT_KEY("grpo.seed", grpo.seed, std::uint64_t),
      TGR_DOUBLE_KEY("grpo.temperature", grpo.temperature),
      make_key(
          "grpo.parametrization",
          [](const ToolkitConfig& c) { return std::string(to_string(c.grpo.parametrization)); },
          [](ToolkitConfig& c, std::string_view v) {
            c.grpo.parametrization = parametrization_from_string(v);
          }),
      TGR_DOUBLE_KEY("metrics.iou_threshold", metrics.iou_threshold),
      TGR_DOUBLE_KEY("metrics.onset_collar", metrics.sed.onset_collar),
      TGR_DOUBLE_KEY("metrics.offset_tolerance", metrics.sed.offset_tolerance),
      make_key(
          "corpus.templates",
          [](const ToolkitConfig& c) { return templates_to_string(c.corpus.templates); },
          [](ToolkitConfig& c, std::string_view v) { c.corpus.templates = templates_from_string(v); }),
      TGR_INT_KEY("corpus.seed", corpus.seed, std::uint64_t),
      TGR_INT_KEY("corpus.max_per_transcript", corpus.max_per_transcript, std::size_t),
      TGR_DOUBLE_KEY("corpus.confidence_threshold", corpus.confidence_threshold),
      TGR_DOUBLE_KEY("corpus.comma_pause", corpus.segmentation.comma_pause),
      TGR_STRING_KEY("protocols.transcriber", protocols.transcriber),
      TGR_STRING_KEY("protocols.judge", protocols.judge),
      TGR_INT_KEY("protocols.max_in_flight", protocols.max_in_flight, std::size_t),
      TGR_STRING_KEY("paths.input", paths.input),
      TGR_STRING_KEY("paths.output", paths.output),
      TGR_STRING_KEY("paths.manifest", paths.manifest),
      TGR_STRING_KEY("paths.environment", paths.environment),
      TGR_STRING_KEY("paths.sidecar", paths.sidecar),
  };
  return keys;
}

#undef TGR_DOUBLE_KEY
#undef TGR_INT_KEY
#undef TGR_STRING_KEY

void check_string_value(std::string_view key, const std::string& value) {
  if (value.find('\n') != std::string::npos || trim(value) != value)
    throw ValidationError("config key '" + std::string(key) +
                          "' must not contain newlines or surrounding whitespace");
}

}  // namespace

void ToolkitConfig::validate() const {
  reward.validate();
  if (!(grpo.reward == reward)) throw ValidationError("grpo.reward must mirror the reward section");
  grpo.validate();
  if (!(metrics.iou_threshold >= 0.0 && metrics.iou_threshold <= 1.0))
    throw ValidationError("metrics.iou_threshold must lie in [0, 1]");
  if (!(metrics.sed.onset_collar >= 0.0)) throw ValidationError("metrics.onset_collar must be >= 0");
  if (!(metrics.sed.offset_tolerance >= 0.0))
    throw ValidationError("metrics.offset_tolerance must be >= 0");
  corpus.validate();
  if (protocols.max_in_flight == 0) throw ValidationError("protocols.max_in_flight must be >= 1");
  check_string_value("protocols.transcriber", protocols.transcriber);
  check_string_value("protocols.judge", protocols.judge);
  check_string_value("paths.input", paths.input);
  check_string_value("paths.output", paths.output);
  check_string_value("paths.manifest", paths.manifest);
  check_string_value("paths.environment", paths.environment);
  check_string_value("paths.sidecar", paths.sidecar);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name);
    return out;
  }();
  return names;
}

ToolkitConfig parse_config(std::string_view text, std::string_view source) {
  std::map<std::string_view, const Key*> by_name;
  for (const auto& k : key_table()) by_name.emplace(k.name, &k);

  ToolkitConfig cfg;
  std::set<std::string> seen;
  std::istringstream lines{std::string(text)};
  std::string raw;
  for (std::size_t line_no = 1; std::getline(lines, raw); ++line_no) {
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ValidationError(where + ": expected 'section.key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    auto it = by_name.find(key);
    if (it == by_name.end()) throw ValidationError(where + ": unknown config key '" + key + "'");
    if (!seen.insert(key).second) throw ValidationError(where + ": duplicate config key '" + key + "'");
    try {
      it->second->set(cfg, value);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  cfg.grpo.reward = cfg.reward;
  cfg.validate();
  return cfg;
}

ToolkitConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string serialize_config(const ToolkitConfig& cfg) {
  std::string out;
  for (const auto& k : key_table()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

bool operator==(const ToolkitConfig& a, const ToolkitConfig& b) {
  return serialize_config(a) == serialize_config(b) && a.grpo.reward == b.grpo.reward;
}

std::optional<std::string> process_env(std::string_view name) {
  const char* v = std::getenv(std::string(name).c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

void apply_env_overrides(ToolkitConfig& cfg, const EnvLookup& lookup) {
  if (auto v = lookup(kTranscriberEnv); v && !v->empty()) cfg.protocols.transcriber = *v;
  if (auto v = lookup(kJudgeEnv); v && !v->empty()) cfg.protocols.judge = *v;
}

}  // namespace tgr
