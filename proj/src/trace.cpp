#include "tgr/trace.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

#include "tgr/errors.hpp"

namespace tgr {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }
bool is_inline_space(char c) { return c == ' ' || c == '\t'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Minimal cursor over the completion bytes used by the timestamp grammar.
class Cursor {
 public:
  Cursor(std::string_view text, std::size_t pos) : text_(text), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ >= text_.size(); }

  std::size_t skip_inline_space() {
    std::size_t n = 0;
    while (!done() && is_inline_space(text_[pos_])) {
      ++pos_;
      ++n;
    }
    return n;
  }

  bool literal(std::string_view lit) {
    if (text_.substr(pos_, lit.size()) != lit) return false;
    pos_ += lit.size();
    return true;
  }

  // digits ('.' digits)?
  std::optional<double> number() {
    const std::size_t begin = pos_;
    while (!done() && is_digit(text_[pos_])) ++pos_;
    if (pos_ == begin) return std::nullopt;
    if (!done() && text_[pos_] == '.' && pos_ + 1 < text_.size() && is_digit(text_[pos_ + 1])) {
      ++pos_;
      while (!done() && is_digit(text_[pos_])) ++pos_;
    }
    double value = 0.0;
    const auto* first = text_.data() + begin;
    const auto* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
    return value;
  }

  bool dash() {
    if (literal("--") || literal("-")) return true;
    return literal("\xE2\x80\x93") || literal("\xE2\x80\x94");  // en / em dash
  }

 private:
  std::string_view text_;
  std::size_t pos_;
};

struct Candidate {
  double start;
  double end;
  CharSpan span;
};

// "starts at X seconds and ends at Y seconds"
std::optional<Candidate> match_template_form(std::string_view text, std::size_t pos) {
  Cursor c(text, pos);
  if (!c.literal("starts at") || c.skip_inline_space() == 0) return std::nullopt;
  auto start = c.number();
  if (!start || c.skip_inline_space() == 0 || !c.literal("second")) return std::nullopt;
  c.literal("s");
  if (c.skip_inline_space() == 0 || !c.literal("and ends at") || c.skip_inline_space() == 0)
    return std::nullopt;
  auto end = c.number();
  if (!end || c.skip_inline_space() == 0 || !c.literal("second")) return std::nullopt;
  c.literal("s");
  return Candidate{*start, *end, {pos, c.pos()}};
}

// "(X.XXs - Y.YYs)" or "[X.XX - Y.YY]"
std::optional<Candidate> match_bracket_form(std::string_view text, std::size_t pos) {
  const char open = text[pos];
  const char close = open == '(' ? ')' : ']';
  Cursor c(text, pos + 1);
  c.skip_inline_space();
  auto start = c.number();
  if (!start) return std::nullopt;
  c.skip_inline_space();
  c.literal("s");
  c.skip_inline_space();
  if (!c.dash()) return std::nullopt;
  c.skip_inline_space();
  auto end = c.number();
  if (!end) return std::nullopt;
  c.skip_inline_space();
  c.literal("s");
  c.skip_inline_space();
  if (!c.literal(std::string_view(&close, 1))) return std::nullopt;
  return Candidate{*start, *end, {pos, c.pos()}};
}

std::optional<Candidate> match_at(std::string_view text, std::size_t pos) {
  const char ch = text[pos];
  if (ch == 's') return match_template_form(text, pos);
  if (ch == '(' || ch == '[') return match_bracket_form(text, pos);
  return std::nullopt;
}

std::vector<Candidate> scan_candidates(std::string_view text) {
  std::vector<Candidate> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (auto cand = match_at(text, pos)) {
      out.push_back(*cand);
      pos = cand->span.end;
    } else {
      ++pos;
    }
  }
  return out;
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// Sentence bounds around [begin, end): newline, or . ! ? followed by whitespace.
CharSpan sentence_around(std::string_view text, CharSpan expr) {
  std::size_t left = expr.begin;
  while (left > 0) {
    const char c = text[left - 1];
    if (c == '\n') break;
    if (is_terminal(c) && is_space(text[left])) break;
    --left;
  }
  std::size_t right = expr.end;
  while (right < text.size()) {
    const char c = text[right];
    if (c == '\n') break;
    if (is_terminal(c) && (right + 1 == text.size() || is_space(text[right + 1]))) {
      ++right;
      break;
    }
    ++right;
  }
  return {left, right};
}

std::string collapse_spaces(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

void validate_choice_set(std::span<const std::string> choice_set) {
  if (choice_set.empty()) throw ValidationError("choice set is empty");
  std::set<std::string_view> seen;
  for (const auto& label : choice_set) {
    if (trim(label).empty()) throw ValidationError("choice set contains an empty label");
    if (!seen.insert(label).second) throw ValidationError("duplicate choice label '" + label + "'");
  }
}

std::vector<std::string_view> split_lines(std::string_view raw) {
  std::vector<std::string_view> lines;
  std::size_t begin = 0;
  while (true) {
    const std::size_t nl = raw.find('\n', begin);
    std::string_view line = raw.substr(begin, nl == std::string_view::npos ? raw.npos : nl - begin);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    begin = nl + 1;
  }
  return lines;
}

}  // namespace

TimeInterval::TimeInterval(double start, double end) : start_(start), end_(end) {
  if (!std::isfinite(start) || !std::isfinite(end))
    throw ValidationError("time interval endpoints must be finite");
  if (start < 0.0) throw ValidationError("time interval starts before 0");
  if (start > end) throw ValidationError("time interval start exceeds end");
}

bool same_interval(const TimeInterval& a, const TimeInterval& b) {
  // Guard band so that endpoints one rendered hundredth apart stay distinct.
  constexpr double limit = kIntervalDedupTolerance - 1e-9;
  return std::abs(a.start() - b.start()) < limit && std::abs(a.end() - b.end()) < limit;
}

std::vector<std::pair<TimeInterval, CharSpan>> scan_timestamps(std::string_view text) {
  std::vector<std::pair<TimeInterval, CharSpan>> out;
  for (const auto& cand : scan_candidates(text)) {
    if (cand.start > cand.end) continue;  // hallucinated inversion: no credit
    out.emplace_back(TimeInterval(cand.start, cand.end), cand.span);
  }
  return out;
}

bool contains_label_token(std::string_view line, std::string_view token) {
  if (token.empty()) return false;
  std::size_t pos = line.find(token);
  while (pos != std::string_view::npos) {
    const bool left_ok = pos == 0 || !is_alnum(line[pos - 1]);
    const std::size_t after = pos + token.size();
    const bool right_ok = after >= line.size() || !is_alnum(line[after]);
    if (left_ok && right_ok) return true;
    pos = line.find(token, pos + 1);
  }
  return false;
}

std::optional<AnswerChoice> extract_final_answer(std::string_view raw,
                                                 std::span<const std::string> choice_set) {
  validate_choice_set(choice_set);
  const auto lines = split_lines(raw);
  for (std::size_t i = lines.size(); i-- > 0;) {
    const std::string* found = nullptr;
    int distinct = 0;
    for (const auto& label : choice_set) {
      if (contains_label_token(lines[i], label)) {
        found = &label;
        ++distinct;
      }
    }
    if (distinct == 1) return AnswerChoice{*found, std::string(lines[i]), i};
  }
  return std::nullopt;
}

ReasoningTrace parse_completion(std::string_view raw, std::span<const std::string> choice_set) {
  ReasoningTrace trace;
  trace.raw = std::string(raw);
  trace.answer = extract_final_answer(raw, choice_set);

  const auto candidates = scan_candidates(raw);
  for (const auto& cand : candidates) {
    if (cand.start > cand.end) continue;
    const CharSpan sentence = sentence_around(raw, cand.span);

    // Claim: the sentence minus every timestamp expression inside it.
    std::string claim;
    std::size_t cursor = sentence.begin;
    for (const auto& other : candidates) {
      if (other.span.end <= sentence.begin || other.span.begin >= sentence.end) continue;
      const std::size_t cut = std::max(cursor, other.span.begin);
      claim.append(raw.substr(cursor, cut - cursor));
      claim.push_back(' ');
      cursor = std::max(cursor, std::min(other.span.end, sentence.end));
    }
    claim.append(raw.substr(cursor, sentence.end - cursor));

    GroundedUnit unit;
    unit.interval = TimeInterval(cand.start, cand.end);
    unit.text = std::string(trim(raw.substr(sentence.begin, sentence.end - sentence.begin)));
    unit.claim = collapse_spaces(claim);
    unit.char_span = cand.span;
    trace.units.push_back(std::move(unit));
  }

  const auto lines = split_lines(raw);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trace.answer && trace.answer->line_index == i) continue;
    const auto line = trim(lines[i]);
    if (!line.empty()) trace.step_texts.emplace_back(line);
  }
  return trace;
}

std::vector<TimeInterval> unique_intervals(const ReasoningTrace& trace) {
  std::vector<TimeInterval> unique;
  for (const auto& unit : trace.units) {
    const bool seen = std::any_of(unique.begin(), unique.end(), [&](const TimeInterval& u) {
      return same_interval(u, unit.interval);
    });
    if (!seen) unique.push_back(unit.interval);
  }
  return unique;
}

std::size_t count_grounded_units(const ReasoningTrace& trace) {
  return unique_intervals(trace).size();
}

std::string reasoning_text(const ReasoningTrace& trace) {
  std::string out;
  for (const auto& step : trace.step_texts) {
    if (!out.empty()) out.push_back('\n');
    out += step;
  }
  return out;
}

std::string format_seconds(double seconds) {
  // Half-up on the decimal value; the small bias absorbs binary representation
  // error so that e.g. 1.005 renders as 1.01.
  const auto cents = static_cast<long long>(std::floor(seconds * 100.0 + 0.5 + 1e-7));
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%lld.%02lld", cents / 100, cents % 100);
  return buf;
}

std::string render_completion(std::span<const RenderStep> steps,
                              const std::optional<std::string>& answer_label) {
  std::string out(kStage2Opener);
  out.push_back('\n');
  for (const auto& step : steps) {
    out += '(' + format_seconds(step.interval.start()) + "s - " +
           format_seconds(step.interval.end()) + "s)";
    const std::string claim = collapse_spaces(step.claim);
    if (!claim.empty()) out += ' ' + claim;
    if (claim.empty() || !is_terminal(claim.back())) out.push_back('.');
    out.push_back('\n');
  }
  if (answer_label) out += "Answer: (" + *answer_label + ")";
  return out;
}

std::string render_trace(const ReasoningTrace& trace) {
  std::vector<RenderStep> steps;
  steps.reserve(trace.units.size());
  for (const auto& unit : trace.units) steps.push_back({unit.interval, unit.claim});
  std::optional<std::string> label;
  if (trace.answer) label = trace.answer->label;
  return render_completion(steps, label);
}

}  // namespace tgr
