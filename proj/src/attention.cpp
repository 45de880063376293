#include "tgr/attention.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "tgr/errors.hpp"

namespace tgr {

namespace {

constexpr char kMagic[8] = {'T', 'G', 'R', 'A', 'T', 'T', 'N', '1'};

std::size_t index_of(Block b) { return static_cast<std::size_t>(b); }

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4))
    throw IoError(std::string("attention export truncated while reading ") + what);
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

double audio_value(const AttentionRecord& r, const SemanticBlockMap& blocks, AggregationMode mode) {
  return block_aggregate(r, blocks, mode)[index_of(Block::audio)];
}

}  // namespace

std::string_view to_string(Block b) {
  switch (b) {
    case Block::system: return "system";
    case Block::audio: return "audio";
    case Block::instruction: return "instruction";
    case Block::self_referential: return "self_referential";
  }
  return "unknown";
}

Block block_from_string(std::string_view name) {
  for (Block b : kAllBlocks)
    if (to_string(b) == name) return b;
  throw ValidationError("unknown semantic block '" + std::string(name) + "'");
}

SemanticBlockMap::SemanticBlockMap(std::vector<Block> assignment)
    : assignment_(std::move(assignment)) {
  for (Block b : assignment_) {
    if (index_of(b) >= kBlockCount) throw ValidationError("invalid block id in block map");
    ++counts_[index_of(b)];
  }
}

SemanticBlockMap SemanticBlockMap::from_ranges(std::span<const Range> ranges) {
  std::size_t total = 0;
  for (const auto& r : ranges) {
    if (r.end_idx <= r.start_idx)
      throw ValidationError("block range [" + std::to_string(r.start_idx) + ", " +
                            std::to_string(r.end_idx) + ") is empty or inverted");
    total = std::max(total, r.end_idx);
  }
  std::vector<int> owner(total, -1);
  for (const auto& r : ranges) {
    for (std::size_t i = r.start_idx; i < r.end_idx; ++i) {
      if (owner[i] >= 0)
        throw ValidationError("token " + std::to_string(i) + " is assigned to two blocks");
      owner[i] = static_cast<int>(r.block);
    }
  }
  std::vector<Block> assignment(total);
  for (std::size_t i = 0; i < total; ++i) {
    if (owner[i] < 0) throw ValidationError("token " + std::to_string(i) + " has no block");
    assignment[i] = static_cast<Block>(owner[i]);
  }
  return SemanticBlockMap(std::move(assignment));
}

void validate_record(const AttentionRecord& record, std::size_t expected_dim) {
  const std::string where =
      "record (layer " + std::to_string(record.layer) + ", token " +
      std::to_string(record.output_token) + ")";
  if (record.weights.size() != expected_dim)
    throw ValidationError(where + " has " + std::to_string(record.weights.size()) +
                          " weights but the block map covers " + std::to_string(expected_dim));
  double sum = 0.0;
  for (double w : record.weights) {
    if (!std::isfinite(w) || w < 0.0)
      throw ValidationError(where + " has a negative or non-finite weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > kRowSumTolerance)
    throw ValidationError(where + " is not row-stochastic (sum " + std::to_string(sum) + ")");
}

double per_token_value(double summed, std::size_t count) {
  if (count == 0) return 0.0;
  const double c = static_cast<double>(count);
  const double q = summed / c;
  if (q * c == summed) return q;
  for (double candidate : {std::nextafter(q, 0.0),
                           std::nextafter(q, std::numeric_limits<double>::infinity())}) {
    if (candidate * c == summed) return candidate;
  }
  return q;
}

BlockValues block_aggregate(const AttentionRecord& record, const SemanticBlockMap& blocks,
                            AggregationMode mode) {
  validate_record(record, blocks.size());
  BlockValues values{};
  for (std::size_t i = 0; i < record.weights.size(); ++i)
    values[index_of(blocks.block_of(i))] += record.weights[i];
  for (Block b : kAllBlocks) {
    const std::size_t count = blocks.count(b);
    const double per_token = per_token_value(values[index_of(b)], count);
    values[index_of(b)] =
        mode == AggregationMode::per_token ? per_token : per_token * static_cast<double>(count);
  }
  return values;
}

LayerProfile layerwise_audio_attention(std::span<const AttentionRecord> records,
                                       const SemanticBlockMap& blocks,
                                       const std::optional<std::string>& phase_filter,
                                       AggregationMode mode) {
  std::map<std::uint32_t, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    if (phase_filter && r.phase != phase_filter) continue;
    auto& slot = acc[r.layer];
    slot.first += audio_value(r, blocks, mode);
    ++slot.second;
  }
  if (acc.empty())
    throw ValidationError("no attention records match phase filter '" +
                          (phase_filter ? *phase_filter : std::string("<any>")) + "'");
  LayerProfile profile;
  for (const auto& [layer, sum_n] : acc)
    profile[layer] = sum_n.first / static_cast<double>(sum_n.second);
  return profile;
}

LayerProfile layer_deltas(const LayerProfile& after, const LayerProfile& before) {
  LayerProfile out;
  for (const auto& [layer, value] : after) {
    auto it = before.find(layer);
    if (it != before.end()) out[layer] = value - it->second;
  }
  return out;
}

std::vector<std::uint32_t> picking_points(const LayerProfile& deltas, double min_increase) {
  std::vector<std::uint32_t> layers;
  for (const auto& [layer, delta] : deltas)
    if (delta > min_increase) layers.push_back(layer);
  return layers;
}

double attention_sink_ratio(std::span<const AttentionRecord> records,
                            const SemanticBlockMap& blocks) {
  if (blocks.count(Block::system) == 0 || blocks.count(Block::audio) == 0)
    throw ValidationError("attention sink ratio needs non-empty system and audio blocks");
  if (records.empty()) throw ValidationError("attention sink ratio needs at least one record");
  double system = 0.0;
  double audio = 0.0;
  for (const auto& r : records) {
    const auto v = block_aggregate(r, blocks, AggregationMode::per_token);
    system += v[index_of(Block::system)];
    audio += v[index_of(Block::audio)];
  }
  if (audio == 0.0) return std::numeric_limits<double>::infinity();
  return system / audio;  // the common 1/n of both means cancels
}

std::map<std::string, double> phase_report(std::span<const AttentionRecord> records,
                                           const SemanticBlockMap& blocks, AggregationMode mode) {
  if (records.empty()) throw ValidationError("phase report needs at least one record");
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    if (!r.phase)
      throw ValidationError("record (layer " + std::to_string(r.layer) + ", token " +
                            std::to_string(r.output_token) + ") carries no phase tag");
    const double v = audio_value(r, blocks, mode);
    auto& slot = acc[*r.phase];
    slot.first += v;
    ++slot.second;
    auto& all = acc["all"];
    all.first += v;
    ++all.second;
  }
  std::map<std::string, double> out;
  for (const auto& [phase, sum_n] : acc) out[phase] = sum_n.first / static_cast<double>(sum_n.second);
  return out;
}

void write_attention_export(std::ostream& out, std::span<const AttentionRecord> records,
                            std::span<const std::string> phases) {
  if (phases.size() > 255) throw ValidationError("at most 255 phase names fit the u8 phase code");
  if (records.size() > std::numeric_limits<std::uint32_t>::max())
    throw ValidationError("too many attention records for one export");
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    std::uint8_t code = 0;
    if (r.phase) {
      auto it = std::find(phases.begin(), phases.end(), *r.phase);
      if (it == phases.end()) throw ValidationError("phase '" + *r.phase + "' is not declared");
      code = static_cast<std::uint8_t>(it - phases.begin() + 1);
    }
    put_u32(out, r.layer);
    put_u32(out, r.output_token);
    out.put(static_cast<char>(code));
    put_u32(out, static_cast<std::uint32_t>(r.weights.size()));
    for (double w : r.weights) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(w)));
  }
  if (!out) throw IoError("failed to write attention export");
}

std::vector<AttentionRecord> read_attention_export(std::istream& in,
                                                   std::span<const std::string> phases) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not an attention export (bad magic)");
  const std::uint32_t count = get_u32(in, "record count");
  std::vector<AttentionRecord> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    AttentionRecord r;
    r.layer = get_u32(in, "layer");
    r.output_token = get_u32(in, "token");
    const int code = in.get();
    if (code == std::char_traits<char>::eof()) throw IoError("attention export truncated at phase");
    if (code > 0) {
      if (static_cast<std::size_t>(code) > phases.size())
        throw ValidationError("record " + std::to_string(i) + " uses undeclared phase code " +
                              std::to_string(code));
      r.phase = phases[static_cast<std::size_t>(code) - 1];
    }
    const std::uint32_t length = get_u32(in, "length");
    r.weights.reserve(length);
    for (std::uint32_t j = 0; j < length; ++j)
      r.weights.push_back(std::bit_cast<float>(get_u32(in, "weights")));
    records.push_back(std::move(r));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw IoError("attention export has trailing bytes after " + std::to_string(count) + " records");
  return records;
}

}  // namespace tgr
