#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "tgr/errors.hpp"
#include "tgr/trace.hpp"

using namespace tgr;

namespace {

const std::vector<std::string> kAbcd = {"A", "B", "C", "D"};

}  // namespace

TEST_CASE("time interval rejects inverted, negative and non-finite bounds") {
  CHECK_NOTHROW(TimeInterval(0.0, 0.0));
  CHECK_NOTHROW(TimeInterval(1.5, 2.5));
  CHECK_THROWS_AS(TimeInterval(2.0, 1.0), ValidationError);
  CHECK_THROWS_AS(TimeInterval(-0.1, 1.0), ValidationError);
  CHECK_THROWS_AS(TimeInterval(0.0, std::numeric_limits<double>::infinity()), ValidationError);
  CHECK_THROWS_AS(TimeInterval(std::nan(""), 1.0), ValidationError);
}

TEST_CASE("stage-1 sentence form yields one unit") {
  const std::string raw =
      "The segment 'I hope the scientist who confirms stream theory,' starts at 12.02 seconds "
      "and ends at 14.34 seconds.";
  const auto trace = parse_completion(raw, kAbcd);
  REQUIRE(trace.units.size() == 1);
  CHECK(trace.units[0].interval.start() == doctest::Approx(12.02));
  CHECK(trace.units[0].interval.end() == doctest::Approx(14.34));
  CHECK(trace.units[0].text == raw);
  CHECK(raw.substr(trace.units[0].char_span.begin,
                   trace.units[0].char_span.end - trace.units[0].char_span.begin) ==
        "starts at 12.02 seconds and ends at 14.34 seconds");
}

TEST_CASE("text without temporal reference has no units and no answer") {
  const auto trace = parse_completion("The speaker sounds calm throughout.", kAbcd);
  CHECK(trace.units.empty());
  CHECK_FALSE(trace.answer.has_value());
  CHECK(count_grounded_units(trace) == 0);
}

TEST_CASE("bracketed span and final answer line") {
  const auto trace = parse_completion("(3.50s - 7.20s) the speaker raises her voice.\nAnswer: (B)", kAbcd);
  REQUIRE(trace.units.size() == 1);
  CHECK(trace.units[0].interval == TimeInterval(3.50, 7.20));
  CHECK(trace.units[0].text == "(3.50s - 7.20s) the speaker raises her voice.");
  CHECK(trace.units[0].claim == "the speaker raises her voice.");
  REQUIRE(trace.answer.has_value());
  CHECK(trace.answer->label == "B");
  CHECK(trace.answer->line_index == 1);
  REQUIRE(trace.step_texts.size() == 1);
  CHECK(trace.step_texts[0] == "(3.50s - 7.20s) the speaker raises her voice.");
}

TEST_CASE("bracketed variants") {
  struct Case {
    const char* text;
    double start, end;
  };
  const Case cases[] = {
      {"[3.50 - 7.20] loud", 3.50, 7.20},
      {"(3.5s-7.2s) loud", 3.5, 7.2},
      {"(12.05 -- 14.29 s) loud", 12.05, 14.29},
      {"(1.00s \xE2\x80\x93 2.00s) en dash", 1.0, 2.0},
      {"(1.00s \xE2\x80\x94 2.00s) em dash", 1.0, 2.0},
      {"[0 - 4] integers", 0.0, 4.0},
  };
  for (const auto& c : cases) {
    CAPTURE(c.text);
    const auto found = scan_timestamps(c.text);
    REQUIRE(found.size() == 1);
    CHECK(found[0].first.start() == doctest::Approx(c.start));
    CHECK(found[0].first.end() == doctest::Approx(c.end));
  }
}

TEST_CASE("malformed and inverted candidates are skipped") {
  CHECK(scan_timestamps("(7.20s - 3.50s) inverted").empty());
  CHECK(scan_timestamps("starts at 5 seconds and ends at 2 seconds").empty());
  CHECK(scan_timestamps("(3.50s - ) truncated").empty());
  CHECK(scan_timestamps("(a - b) letters").empty());
  CHECK(scan_timestamps("3.50 - 7.20 without brackets").empty());
  CHECK(scan_timestamps("(3.50s - 7.20s").empty());
  const auto trace = parse_completion("(7.20s - 3.50s) inverted.\n(1.00s - 2.00s) fine.", kAbcd);
  REQUIRE(trace.units.size() == 1);
  CHECK(trace.units[0].interval == TimeInterval(1.0, 2.0));
}

TEST_CASE("answer extraction scans from the bottom") {
  CHECK(extract_final_answer("...reasoning...\nThe answer is B.", kAbcd)->label == "B");
  const auto c = extract_final_answer("A or B could fit.\nFinal answer: (C)", kAbcd);
  REQUIRE(c.has_value());
  CHECK(c->label == "C");
  CHECK(c->source_line == "Final answer: (C)");
  CHECK_FALSE(extract_final_answer("no option stated", kAbcd).has_value());
  // ambiguous last line falls through to the line above
  CHECK(extract_final_answer("Answer: (D)\nA or B?", kAbcd)->label == "D");
  // repeated mention of one label is not ambiguous
  CHECK(extract_final_answer("(B) because B is loud", kAbcd)->label == "B");
  // labels are case-sensitive tokens
  CHECK_FALSE(extract_final_answer("a quiet scene", kAbcd).has_value());
  CHECK_FALSE(extract_final_answer("ABBA plays", kAbcd).has_value());
}

TEST_CASE("choice set must be non-empty and distinct") {
  CHECK_THROWS_AS(parse_completion("x", std::vector<std::string>{}), ValidationError);
  CHECK_THROWS_AS(parse_completion("x", std::vector<std::string>{"A", "A"}), ValidationError);
}

TEST_CASE("count_grounded_units deduplicates intervals") {
  CHECK(count_grounded_units(parse_completion("(1s - 2s) x. (3s - 4s) y.", kAbcd)) == 2);
  CHECK(count_grounded_units(parse_completion("(1s - 2s) x. (1s - 2s) y.", kAbcd)) == 1);
  CHECK(count_grounded_units(parse_completion("(1.000s - 2.000s) x. (1.009s - 1.991s) y.", kAbcd)) == 1);
  CHECK(count_grounded_units(parse_completion("(1.00s - 2.00s) x. (1.01s - 2.00s) y.", kAbcd)) == 2);
  CHECK(count_grounded_units(ReasoningTrace{}) == 0);
  CHECK(same_interval(TimeInterval(1.0, 2.0), TimeInterval(1.005, 2.0)));
  CHECK_FALSE(same_interval(TimeInterval(1.0, 2.0), TimeInterval(1.0, 2.02)));
}

TEST_CASE("several timestamps in one sentence share the sentence text") {
  const auto trace = parse_completion("Between (1.00s - 2.00s) and (3.00s - 4.00s) the dog barks.", kAbcd);
  REQUIRE(trace.units.size() == 2);
  CHECK(trace.units[0].text == trace.units[1].text);
  CHECK(trace.units[0].claim == "Between and the dog barks.");
}

TEST_CASE("format_seconds rounds half up to hundredths") {
  CHECK(format_seconds(12.02) == "12.02");
  CHECK(format_seconds(0.125) == "0.13");
  CHECK(format_seconds(1.005) == "1.01");
  CHECK(format_seconds(3.0) == "3.00");
  CHECK(format_seconds(59.999) == "60.00");
}

TEST_CASE("property: render then parse reproduces intervals and answer") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> pos(0.0, 300.0);
  std::uniform_int_distribution<int> n_steps(0, 6);
  std::uniform_int_distribution<int> pick(0, 3);
  const char* claims[] = {"a dog barks", "the speaker laughs", "music fades out",
                          "someone says hello", "", "silence"};
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<RenderStep> steps;
    const int n = n_steps(rng);
    for (int i = 0; i < n; ++i) {
      double s = std::round(pos(rng) * 100.0) / 100.0;
      double e = std::round(pos(rng) * 100.0) / 100.0;
      if (s > e) std::swap(s, e);
      steps.push_back({TimeInterval(s, e), claims[(trial + i) % 6]});
    }
    std::optional<std::string> label;
    if (trial % 5 != 0) label = kAbcd[static_cast<std::size_t>(pick(rng))];
    const std::string raw = render_completion(steps, label);
    const auto trace = parse_completion(raw, kAbcd);
    REQUIRE(trace.units.size() == steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      CHECK(std::abs(trace.units[i].interval.start() - steps[i].interval.start()) < 0.005);
      CHECK(std::abs(trace.units[i].interval.end() - steps[i].interval.end()) < 0.005);
    }
    CHECK(trace.answer.has_value() == label.has_value());
    if (label) CHECK(trace.answer->label == *label);
    // idempotence through the canonical renderer
    const auto again = parse_completion(render_trace(trace), kAbcd);
    REQUIRE(again.units.size() == trace.units.size());
    for (std::size_t i = 0; i < again.units.size(); ++i)
      CHECK(again.units[i].interval == trace.units[i].interval);
  }
}

TEST_CASE("property: spans are ordered, non-overlapping and re-scan to the same interval") {
  std::mt19937_64 rng(7);
  const char* pieces[] = {"(1.00s - 2.00s)", " noise ", "[3.5 - 4.25]", "starts at 5 seconds and ends at 6.5 seconds",
                          "(9s - 8s)", ".\n", "Answer: (A)", " (2.00s-", "0.5s) ", "[ 1 - 2 ]"};
  std::uniform_int_distribution<int> pick(0, 9);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string raw;
    for (int i = 0; i < 12; ++i) raw += pieces[pick(rng)];
    const auto trace = parse_completion(raw, kAbcd);
    for (std::size_t i = 0; i < trace.units.size(); ++i) {
      const auto& span = trace.units[i].char_span;
      REQUIRE(span.begin < span.end);
      REQUIRE(span.end <= raw.size());
      if (i > 0) CHECK(trace.units[i - 1].char_span.end <= span.begin);
      const auto alone = scan_timestamps(std::string_view(raw).substr(span.begin, span.end - span.begin));
      REQUIRE(alone.size() == 1);
      CHECK(alone[0].first == trace.units[i].interval);
      CHECK_FALSE(trace.units[i].text.empty());
    }
    // appending non-temporal text leaves k unchanged
    CHECK(count_grounded_units(parse_completion(raw + "\nThe end, nothing else.", kAbcd)) ==
          count_grounded_units(trace));
  }
}
