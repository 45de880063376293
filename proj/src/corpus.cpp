#include "tgr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tgr/errors.hpp"

namespace tgr {

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

double round_hundredths(double seconds) {
  // Same half-up rule as format_seconds, so the stored value prints identically.
  return std::floor(seconds * 100.0 + 0.5 + 1e-7) / 100.0;
}

constexpr std::string_view kStage1Question = "What is the timestamp of the following segment? ";
constexpr std::string_view kFlamingoFormat =
    "\nProvide both the start and end timestamps of this segment in seconds with 2 decimal "
    "places.\nFormat: The segment starts at X.XX seconds and ends at Y.YY seconds.";
constexpr std::string_view kStage2Instruction =
    "When answering, you must first provide reasoning grounded in the audio content using "
    "explicit timestamps.\nStart your response exactly with: \"To determine the best "
    "description, let's analyze the audio content and the given timestamps:\" Then, after the "
    "reasoning, provide the final answer.";

}  // namespace

void TimedTranscript::validate() const {
  if (!std::isfinite(duration) || duration < 0.0)
    throw ValidationError("transcript '" + audio_ref + "' has an invalid duration");
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    const std::string where = "transcript '" + audio_ref + "' word " + std::to_string(i);
    if (trim(w.word).empty()) throw ValidationError(where + " is empty");
    if (!std::isfinite(w.start) || !std::isfinite(w.end))
      throw ValidationError(where + " has non-finite timing");
    if (w.start > w.end) throw ValidationError(where + " starts after it ends");
    if (w.start < 0.0 || w.end > duration)
      throw ValidationError(where + " lies outside [0, duration]");
    if (i > 0 && w.start < words[i - 1].start)
      throw ValidationError(where + " starts before the previous word");
    if (w.confidence && !(*w.confidence >= 0.0 && *w.confidence <= 1.0))
      throw ValidationError(where + " has confidence outside [0, 1]");
  }
}

std::vector<Sentence> segment_sentences(const TimedTranscript& transcript,
                                        const SegmentationConfig& cfg) {
  if (transcript.words.empty())
    throw ValidationError("transcript '" + transcript.audio_ref + "' has no words");
  transcript.validate();

  std::vector<Sentence> out;
  const auto& words = transcript.words;
  std::size_t first = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto token = trim(words[i].word);
    const char last = token.back();
    const bool terminal = last == '.' || last == '?' || last == '!';
    const bool paused_comma =
        last == ',' && i + 1 < words.size() && words[i + 1].start - words[i].end > cfg.comma_pause;
    if (!terminal && !paused_comma && i + 1 < words.size()) continue;

    Sentence s;
    s.first_word = first;
    s.word_count = i - first + 1;
    s.interval = TimeInterval(words[first].start, words[i].end);
    double conf_sum = 0.0;
    std::size_t conf_n = 0;
    for (std::size_t j = first; j <= i; ++j) {
      if (j > first) s.text.push_back(' ');
      s.text += trim(words[j].word);
      if (words[j].confidence) {
        conf_sum += *words[j].confidence;
        ++conf_n;
      }
    }
    if (conf_n > 0) s.mean_confidence = conf_sum / static_cast<double>(conf_n);
    out.push_back(std::move(s));
    first = i + 1;
  }
  return out;
}

std::string_view to_string(TemplateId id) { return id == TemplateId::omni ? "omni" : "flamingo"; }

TemplateId template_from_string(std::string_view name) {
  if (name == "omni") return TemplateId::omni;
  if (name == "flamingo") return TemplateId::flamingo;
  throw ValidationError("unknown template '" + std::string(name) + "'");
}

StaInstance render_sta_instance(std::string_view sentence, const TimeInterval& interval,
                                TemplateId template_id, std::string_view audio_ref) {
  StaInstance inst;
  inst.audio_ref = std::string(audio_ref);
  inst.sentence = std::string(sentence);
  inst.interval = TimeInterval(round_hundredths(interval.start()), round_hundredths(interval.end()));
  inst.template_id = template_id;

  const std::string ts = format_seconds(interval.start());
  const std::string te = format_seconds(interval.end());
  inst.question = std::string(kStage1Question) + inst.sentence;
  if (template_id == TemplateId::omni) {
    inst.answer = "The segment " + inst.sentence + " starts at " + ts + " seconds and ends at " +
                  te + " seconds.";
  } else {
    inst.question += kFlamingoFormat;
    inst.answer = "The segment starts at " + ts + " seconds and ends at " + te + " seconds.";
  }
  return inst;
}

std::string render_stage2_instruction(std::string_view question, std::span<const Choice> choices) {
  if (choices.empty()) throw ValidationError("stage-2 instruction needs at least one choice");
  std::string out(trim(question));
  for (const auto& c : choices) {
    if (trim(c.label).empty()) throw ValidationError("choice with an empty label");
    out += "\n(" + c.label + ")";
    if (!trim(c.text).empty()) out += " " + std::string(trim(c.text));
  }
  out += '\n';
  out += kStage2Instruction;
  return out;
}

void CorpusConfig::validate() const {
  if (templates.empty()) throw ValidationError("corpus config lists no templates");
  if (max_per_transcript == 0) throw ValidationError("max_per_transcript must be >= 1");
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0))
    throw ValidationError("confidence threshold must lie in [0, 1]");
  if (!(segmentation.comma_pause >= 0.0)) throw ValidationError("comma pause must be >= 0");
}

std::vector<Sentence> eligible_sentences(const TimedTranscript& transcript,
                                         const CorpusConfig& cfg) {
  auto sentences = segment_sentences(transcript, cfg.segmentation);
  std::erase_if(sentences, [&](const Sentence& s) {
    return s.mean_confidence && *s.mean_confidence < cfg.confidence_threshold;
  });
  return sentences;
}

std::vector<StaInstance> instances_for_transcript(const TimedTranscript& transcript,
                                                  std::size_t index, const CorpusConfig& cfg) {
  cfg.validate();
  const auto sentences = eligible_sentences(transcript, cfg);

  // Partial Fisher-Yates on indices, then restore timeline order.
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  const std::size_t take = std::min(cfg.max_per_transcript, order.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(take);
  std::sort(order.begin(), order.end());

  std::vector<StaInstance> out;
  for (std::size_t idx : order)
    for (TemplateId tpl : cfg.templates)
      out.push_back(render_sta_instance(sentences[idx].text, sentences[idx].interval, tpl,
                                        transcript.audio_ref));
  return out;
}

CorpusResult build_corpus(std::span<const TimedTranscript> transcripts, const CorpusConfig& cfg) {
  cfg.validate();
  CorpusResult result;
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    ++result.summary.transcripts_read;
    try {
      auto instances = instances_for_transcript(transcripts[i], i, cfg);
      result.summary.sentences_below_confidence +=
          segment_sentences(transcripts[i], cfg.segmentation).size() -
          eligible_sentences(transcripts[i], cfg).size();
      result.summary.instances_written += instances.size();
      std::move(instances.begin(), instances.end(), std::back_inserter(result.instances));
    } catch (const ValidationError& e) {
      ++result.summary.transcripts_skipped;
      result.summary.problems.push_back(e.what());
    }
  }
  return result;
}

}  // namespace tgr
