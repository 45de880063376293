#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "tgr/attention.hpp"
#include "tgr/errors.hpp"

using namespace tgr;

namespace {

constexpr auto kSystem = static_cast<std::size_t>(Block::system);
constexpr auto kAudio = static_cast<std::size_t>(Block::audio);

// 2 system, 5 audio, 2 instruction, 1 self-referential token
SemanticBlockMap sink_blocks() {
  const std::vector<SemanticBlockMap::Range> ranges = {{Block::system, 0, 2},
                                                       {Block::audio, 2, 7},
                                                       {Block::instruction, 7, 9},
                                                       {Block::self_referential, 9, 10}};
  return SemanticBlockMap::from_ranges(ranges);
}

AttentionRecord sink_record(std::uint32_t layer = 0) {
  AttentionRecord r;
  r.layer = layer;
  r.weights = {0.35, 0.35, 0.02, 0.02, 0.02, 0.02, 0.02, 0.1, 0.05, 0.05};
  return r;
}

std::vector<double> random_row(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = u(rng);
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= s;
  return w;
}

SemanticBlockMap random_blocks(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> b(0, 3);
  std::vector<Block> assignment(n);
  for (auto& x : assignment) x = static_cast<Block>(b(rng));
  return SemanticBlockMap(assignment);
}

// All non-audio mass sits on the first system token.
AttentionRecord audio_record(std::uint32_t layer, double audio_mass, const char* phase) {
  AttentionRecord r;
  r.layer = layer;
  r.phase = phase;
  r.weights.assign(10, 0.0);
  r.weights[0] = 1.0 - audio_mass;
  for (std::size_t i = 2; i < 7; ++i) r.weights[i] = audio_mass / 5.0;
  return r;
}

}  // namespace

TEST_CASE("block map from ranges") {
  const auto m = sink_blocks();
  CHECK(m.size() == 10);
  CHECK(m.count(Block::system) == 2);
  CHECK(m.count(Block::audio) == 5);
  CHECK(m.count(Block::instruction) == 2);
  CHECK(m.count(Block::self_referential) == 1);
  CHECK(m.block_of(4) == Block::audio);

  const std::vector<SemanticBlockMap::Range> gap = {{Block::system, 0, 2}, {Block::audio, 3, 5}};
  CHECK_THROWS_AS(SemanticBlockMap::from_ranges(gap), ValidationError);
  const std::vector<SemanticBlockMap::Range> overlap = {{Block::system, 0, 3}, {Block::audio, 2, 5}};
  CHECK_THROWS_AS(SemanticBlockMap::from_ranges(overlap), ValidationError);
  const std::vector<SemanticBlockMap::Range> reversed = {{Block::system, 3, 1}};
  CHECK_THROWS_AS(SemanticBlockMap::from_ranges(reversed), ValidationError);
  const std::vector<SemanticBlockMap::Range> unordered = {{Block::audio, 2, 5}, {Block::system, 0, 2}};
  CHECK(SemanticBlockMap::from_ranges(unordered).count(Block::audio) == 3);
  CHECK(block_from_string("self_referential") == Block::self_referential);
  CHECK_THROWS_AS(block_from_string("vision"), ValidationError);
}

TEST_CASE("uniform weights") {
  const auto m = sink_blocks();
  AttentionRecord r;
  r.weights.assign(10, 0.1);
  const auto summed = block_aggregate(r, m, AggregationMode::summed);
  const auto per = block_aggregate(r, m, AggregationMode::per_token);
  for (auto b : kAllBlocks) {
    const auto i = static_cast<std::size_t>(b);
    CHECK(summed[i] == doctest::Approx(static_cast<double>(m.count(b)) / 10.0));
    CHECK(per[i] == doctest::Approx(0.1));
  }
}

TEST_CASE("sink fixture gives a 17.5 per-token ratio") {
  const auto m = sink_blocks();
  const auto r = sink_record();
  const auto summed = block_aggregate(r, m, AggregationMode::summed);
  const auto per = block_aggregate(r, m, AggregationMode::per_token);
  CHECK(summed[kSystem] == doctest::Approx(0.7));
  CHECK(summed[kAudio] == doctest::Approx(0.1));
  CHECK(per[kSystem] == doctest::Approx(0.35));
  CHECK(per[kAudio] == doctest::Approx(0.02));
  const std::vector<AttentionRecord> records = {r, sink_record(1)};
  CHECK(attention_sink_ratio(records, m) == doctest::Approx(17.5).epsilon(1e-9));
}

TEST_CASE("sink ratio edge cases") {
  const auto m = sink_blocks();
  AttentionRecord flat;
  flat.weights.assign(10, 0.1);
  CHECK(attention_sink_ratio(std::vector<AttentionRecord>{flat}, m) == doctest::Approx(1.0));
  AttentionRecord deaf;
  deaf.weights = {0.5, 0.5, 0, 0, 0, 0, 0, 0, 0, 0};
  CHECK(attention_sink_ratio(std::vector<AttentionRecord>{deaf}, m) == std::numeric_limits<double>::infinity());
  const SemanticBlockMap no_system(std::vector<Block>(10, Block::audio));
  CHECK_THROWS_AS(attention_sink_ratio(std::vector<AttentionRecord>{flat}, no_system), ValidationError);
}

TEST_CASE("record validation") {
  const auto m = sink_blocks();
  AttentionRecord r = sink_record();
  CHECK_NOTHROW(validate_record(r, 10));
  r.weights.pop_back();
  CHECK_THROWS_AS(block_aggregate(r, m, AggregationMode::summed), ValidationError);
  r = sink_record();
  r.weights[0] = -0.01;
  r.weights[1] = 0.37;
  CHECK_THROWS_AS(validate_record(r, 10), ValidationError);
  r = sink_record();
  r.weights[0] += 0.001;
  CHECK_THROWS_AS(validate_record(r, 10), ValidationError);
  r = sink_record();
  r.weights[0] += 0.00005;
  CHECK_NOTHROW(validate_record(r, 10));
}

TEST_CASE("property: conservation and the per-token identity") {
  std::mt19937_64 rng(47);
  std::uniform_int_distribution<std::size_t> n(1, 300);
  for (int trial = 0; trial < 20000; ++trial) {
    const std::size_t dim = n(rng);
    const auto m = random_blocks(rng, dim);
    AttentionRecord r;
    r.weights = random_row(rng, dim);
    const auto summed = block_aggregate(r, m, AggregationMode::summed);
    const auto per = block_aggregate(r, m, AggregationMode::per_token);
    CHECK(std::abs(std::accumulate(summed.begin(), summed.end(), 0.0) - 1.0) <= 1e-4);
    for (auto b : kAllBlocks) {
      const auto i = static_cast<std::size_t>(b);
      CHECK(per[i] * static_cast<double>(m.count(b)) == summed[i]);
      if (m.count(b) == 0) CHECK(per[i] == 0.0);
    }
  }
}

TEST_CASE("property: relabeling token indices leaves aggregates unchanged") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = 2 + static_cast<std::size_t>(trial % 60);
    std::vector<Block> assignment(dim);
    std::uniform_int_distribution<int> b(0, 3);
    for (auto& x : assignment) x = static_cast<Block>(b(rng));
    AttentionRecord r;
    r.weights = random_row(rng, dim);
    std::vector<std::size_t> perm(dim);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Block> assignment_p(dim);
    AttentionRecord rp;
    rp.weights.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      assignment_p[perm[i]] = assignment[i];
      rp.weights[perm[i]] = r.weights[i];
    }
    const SemanticBlockMap m(assignment), mp(assignment_p);
    for (auto mode : {AggregationMode::summed, AggregationMode::per_token}) {
      const auto a = block_aggregate(r, m, mode), c = block_aggregate(rp, mp, mode);
      for (std::size_t i = 0; i < kBlockCount; ++i) CHECK(std::abs(a[i] - c[i]) < 1e-12);
    }
  }
}

TEST_CASE("layerwise audio attention") {
  const auto m = sink_blocks();
  const std::vector<AttentionRecord> single = {sink_record(3)};
  const auto profile = layerwise_audio_attention(single, m, std::nullopt);
  REQUIRE(profile.size() == 1);
  CHECK(profile.at(3) == block_aggregate(single[0], m, AggregationMode::summed)[kAudio]);

  std::vector<AttentionRecord> records = {audio_record(0, 0.1, "reasoning"), audio_record(0, 0.3, "reasoning"),
                                          audio_record(2, 0.2, "answer"), audio_record(2, 0.4, "reasoning")};
  const auto all = layerwise_audio_attention(records, m, std::nullopt);
  CHECK(all.size() == 2);
  CHECK(all.count(1) == 0);
  CHECK(all.at(0) == doctest::Approx(0.2));
  CHECK(all.at(2) == doctest::Approx(0.3));
  const auto answer = layerwise_audio_attention(records, m, std::string("answer"));
  CHECK(answer.size() == 1);
  CHECK(answer.at(2) == doctest::Approx(0.2));
  CHECK_THROWS_WITH_AS(layerwise_audio_attention(records, m, std::string("timestamp")),
                       doctest::Contains("timestamp"), ValidationError);

  std::mt19937_64 rng(59);
  std::shuffle(records.begin(), records.end(), rng);
  const auto shuffled = layerwise_audio_attention(records, m, std::nullopt);
  for (const auto& [layer, v] : all) CHECK(std::abs(shuffled.at(layer) - v) < 1e-12);
}

TEST_CASE("layer deltas and picking points") {
  const LayerProfile before = {{0, 0.10}, {1, 0.20}, {2, 0.30}, {3, 0.25}};
  const LayerProfile after = {{0, 0.12}, {1, 0.15}, {2, 0.45}, {4, 0.9}};
  const auto d = layer_deltas(after, before);
  REQUIRE(d.size() == 3);
  CHECK(d.at(0) == doctest::Approx(0.02));
  CHECK(d.at(1) == doctest::Approx(-0.05));
  CHECK(d.at(2) == doctest::Approx(0.15));
  CHECK(picking_points(d) == std::vector<std::uint32_t>{0, 2});
  CHECK(picking_points(d, 0.1) == std::vector<std::uint32_t>{2});
}

TEST_CASE("phase report") {
  const auto m = sink_blocks();
  const std::vector<AttentionRecord> records = {audio_record(0, 0.10, "reasoning"), audio_record(1, 0.12, "reasoning"),
                                                audio_record(0, 0.07, "answer"), audio_record(1, 0.07, "answer")};
  const auto rep = phase_report(records, m);
  CHECK(rep.at("reasoning") == doctest::Approx(0.11));
  CHECK(rep.at("answer") == doctest::Approx(0.07));
  CHECK(rep.at("all") == doctest::Approx(0.09));

  const std::vector<AttentionRecord> one_phase = {audio_record(0, 0.2, "reasoning"), audio_record(1, 0.4, "reasoning")};
  const auto single = phase_report(one_phase, m);
  CHECK(single.at("reasoning") == doctest::Approx(single.at("all")));

  auto untagged = records;
  untagged[2].phase.reset();
  CHECK_THROWS_AS(phase_report(untagged, m), ValidationError);
}

TEST_CASE("export round trip") {
  const std::vector<std::string> phases = {"reasoning", "answer"};
  std::vector<AttentionRecord> records = {audio_record(0, 0.25, "reasoning"), sink_record(5),
                                          audio_record(7, 0.5, "answer")};
  records[1].output_token = 42;
  std::stringstream buf;
  write_attention_export(buf, records, phases);
  const auto back = read_attention_export(buf, phases);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].layer == records[i].layer);
    CHECK(back[i].output_token == records[i].output_token);
    CHECK(back[i].phase == records[i].phase);
    REQUIRE(back[i].weights.size() == records[i].weights.size());
    for (std::size_t j = 0; j < back[i].weights.size(); ++j)
      CHECK(back[i].weights[j] == static_cast<double>(static_cast<float>(records[i].weights[j])));
  }
}

TEST_CASE("export rejects bad input") {
  const std::vector<std::string> phases = {"reasoning"};
  std::vector<AttentionRecord> records = {audio_record(0, 0.25, "answer")};
  std::stringstream out;
  CHECK_THROWS_AS(write_attention_export(out, records, phases), ValidationError);

  std::stringstream bad_magic("NOTATTN1\x01\x00\x00\x00");
  CHECK_THROWS(read_attention_export(bad_magic, phases));

  records[0].phase = "reasoning";
  std::stringstream good;
  write_attention_export(good, records, phases);
  const std::string bytes = good.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS(read_attention_export(truncated, phases));
  std::stringstream trailing(bytes + "x");
  CHECK_THROWS(read_attention_export(trailing, phases));
  std::stringstream unknown_phase(bytes);
  CHECK_THROWS(read_attention_export(unknown_phase, std::vector<std::string>{}));
}
