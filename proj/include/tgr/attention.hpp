#pragma once

// Semantic-block analysis of exported attention rows.
//
// Each record is one head-averaged, row-stochastic attention vector from an
// output token onto the input tokens at one layer. Input tokens are grouped
// into four semantic blocks (system, audio, instruction, self-referential).
//
// Export file layout (little-endian):
//
//   header  : "TGRATTN1" (8 bytes), u32 record_count
//   record  : u32 layer, u32 output_token, u8 phase, u32 length, f32[length]
//
// phase 0 means untagged; phase k >= 1 names the k-th entry of the sidecar's
// "phases" list.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tgr {

enum class Block : std::uint8_t { system = 0, audio = 1, instruction = 2, self_referential = 3 };
inline constexpr std::size_t kBlockCount = 4;
inline constexpr std::array<Block, kBlockCount> kAllBlocks = {Block::system, Block::audio,
                                                             Block::instruction,
                                                             Block::self_referential};

std::string_view to_string(Block b);
Block block_from_string(std::string_view name);

class SemanticBlockMap {
 public:
  /// Half-open [start_idx, end_idx) run of input tokens.
  struct Range {
    Block block;
    std::size_t start_idx;
    std::size_t end_idx;
  };

  SemanticBlockMap() = default;
  explicit SemanticBlockMap(std::vector<Block> assignment);
  /// Ranges must tile [0, N) exactly once (any order).
  static SemanticBlockMap from_ranges(std::span<const Range> ranges);

  std::size_t size() const { return assignment_.size(); }
  Block block_of(std::size_t token) const { return assignment_.at(token); }
  std::size_t count(Block b) const { return counts_[static_cast<std::size_t>(b)]; }

 private:
  std::vector<Block> assignment_;
  std::array<std::size_t, kBlockCount> counts_{};
};

struct AttentionRecord {
  std::uint32_t layer = 0;
  std::uint32_t output_token = 0;
  std::vector<double> weights;
  std::optional<std::string> phase;
};

/// Per-block values, indexed by static_cast<size_t>(Block).
using BlockValues = std::array<double, kBlockCount>;

enum class AggregationMode { summed, per_token };

/// Normalization slack for row-stochastic checks.
inline constexpr double kRowSumTolerance = 1e-4;

/// Throws ValidationError unless weights are finite, non-negative and sum to 1 within slack.
void validate_record(const AttentionRecord& record, std::size_t expected_dim);

/// Block totals (summed) or totals divided by block token count (per_token; 0 for empty blocks).
/// Summed totals are reported as per_token * count, which keeps that product
/// identity exact in floating point; they stay within a few ulp of the raw sum.
BlockValues block_aggregate(const AttentionRecord& record, const SemanticBlockMap& blocks,
                            AggregationMode mode);

/// summed / count, nudged by at most one ulp so that the result times count
/// reproduces summed exactly whenever a neighbouring double allows it.
double per_token_value(double summed, std::size_t count);

using LayerProfile = std::map<std::uint32_t, double>;

/// Mean audio-block attention per layer over records whose phase matches the
/// filter (no filter: all records). Layers without records are absent.
LayerProfile layerwise_audio_attention(std::span<const AttentionRecord> records,
                                       const SemanticBlockMap& blocks,
                                       const std::optional<std::string>& phase_filter,
                                       AggregationMode mode = AggregationMode::summed);

/// after - before on the layers both profiles contain.
LayerProfile layer_deltas(const LayerProfile& after, const LayerProfile& before);

/// Layers whose delta exceeds min_increase, in layer order.
std::vector<std::uint32_t> picking_points(const LayerProfile& deltas, double min_increase = 0.0);

/// Mean per-token system attention over mean per-token audio attention.
/// Returns +infinity when audio attention is zero.
double attention_sink_ratio(std::span<const AttentionRecord> records,
                            const SemanticBlockMap& blocks);

/// Mean audio-block attention per phase, plus an "all" entry. Rejects untagged records.
std::map<std::string, double> phase_report(std::span<const AttentionRecord> records,
                                           const SemanticBlockMap& blocks,
                                           AggregationMode mode = AggregationMode::summed);

/// Writes the binary export. Record phases must be empty or listed in `phases`.
void write_attention_export(std::ostream& out, std::span<const AttentionRecord> records,
                            std::span<const std::string> phases);

/// Reads the binary export; phase codes are resolved against `phases`.
std::vector<AttentionRecord> read_attention_export(std::istream& in,
                                                   std::span<const std::string> phases);

}  // namespace tgr
