#pragma once

// Toolkit configuration file.
//
// One `section.key = value` assignment per line; blank lines and lines whose
// first non-blank character is '#' are ignored. Values run to the end of the
// line and are trimmed. Unknown or repeated keys are errors.
//
//   reward.k_ref = 1
//   grpo.group_size = 8
//   protocols.judge = exec:./build/tools/tgr-mock-protocol
//
// Only endpoint descriptors may be overridden from the environment:
// TGR_PROTOCOLS_TRANSCRIBER and TGR_PROTOCOLS_JUDGE.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tgr/corpus.hpp"
#include "tgr/grpo.hpp"
#include "tgr/metrics.hpp"
#include "tgr/reward.hpp"

namespace tgr {

struct ProtocolConfig {
  std::string transcriber;  // endpoint descriptor, empty when unset
  std::string judge;
  std::size_t max_in_flight = 4;
};

struct PathsConfig {
  std::string input;
  std::string output;
  std::string manifest;
  std::string environment;
  std::string sidecar;
};

struct ToolkitConfig {
  CompactionConfig reward;
  TrainConfig grpo;  // grpo.reward mirrors `reward` after parsing
  GroundingConfig metrics;
  CorpusConfig corpus;
  ProtocolConfig protocols;
  PathsConfig paths;

  /// Throws ValidationError naming the first offending key.
  void validate() const;
};

/// Every key accepted by parse_config, in serialization order.
const std::vector<std::string>& config_keys();

ToolkitConfig parse_config(std::string_view text, std::string_view source = "<config>");
ToolkitConfig load_config(const std::string& path);

/// Writes every key; parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const ToolkitConfig& cfg);

bool operator==(const ToolkitConfig& a, const ToolkitConfig& b);

inline constexpr std::string_view kTranscriberEnv = "TGR_PROTOCOLS_TRANSCRIBER";
inline constexpr std::string_view kJudgeEnv = "TGR_PROTOCOLS_JUDGE";

using EnvLookup = std::function<std::optional<std::string>(std::string_view)>;

/// Lookup backed by the process environment.
std::optional<std::string> process_env(std::string_view name);

/// Replaces endpoint descriptors with non-empty environment values.
void apply_env_overrides(ToolkitConfig& cfg, const EnvLookup& lookup = process_env);

}  // namespace tgr
