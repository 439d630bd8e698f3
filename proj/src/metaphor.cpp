#include "mc/metaphor.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

#include "mc/error.hpp"

namespace mc::metaphor {

using corpus::Pos;

namespace {

constexpr std::array<std::pair<Pattern, std::string_view>, 6> kPatternNames{{
    {Pattern::ADJ_NOUN, "ADJ_NOUN"},
    {Pattern::NOUN_VERB, "NOUN_VERB"},
    {Pattern::VERB_NOUN, "VERB_NOUN"},
    {Pattern::ADV_VERB, "ADV_VERB"},
    {Pattern::NOUN_NOUN_COP, "NOUN_NOUN_COP"},
    {Pattern::SIMILE, "SIMILE"},
}};

constexpr std::array<std::string_view, 8> kCopulas{"is", "are", "was", "were", "be", "been", "seems", "seemed"};

bool is_copula(const corpus::Token& t) {
  const auto lw = to_lower_ascii(t.surface);
  return std::find(kCopulas.begin(), kCopulas.end(), lw) != kCopulas.end();
}

bool is_simile_marker(const corpus::Token& t) {
  const auto lw = to_lower_ascii(t.surface);
  return lw == "like" || lw == "as";
}

class PairCollector {
 public:
  PairCollector(const corpus::Sentence& sentence, std::string_view doc_id) : sentence_(sentence), doc_id_(doc_id) {}

  // First emission of a token pair wins.
  void add(std::size_t a, std::size_t b, Pattern pattern) {
    if (a == b) return;
    if (a > b) std::swap(a, b);
    for (const auto& p : pairs_) {
      if (p.w1_token == a && p.w2_token == b) return;
    }
    WordPair pair;
    pair.doc_id = std::string(doc_id_);
    pair.sentence_index = sentence_.index;
    pair.w1_token = a;
    pair.w2_token = b;
    pair.pattern = pattern;
    pair.w1 = sentence_.tokens[a];
    pair.w2 = sentence_.tokens[b];
    pair.sentence_text = sentence_.text;
    pairs_.push_back(std::move(pair));
  }

  std::vector<WordPair> take() {
    std::sort(pairs_.begin(), pairs_.end(), [](const WordPair& x, const WordPair& y) {
      return std::tie(x.w1_token, x.w2_token) < std::tie(y.w1_token, y.w2_token);
    });
    return std::move(pairs_);
  }

 private:
  const corpus::Sentence& sentence_;
  std::string_view doc_id_;
  std::vector<WordPair> pairs_;
};

bool parse_score(std::string_view s, double& out) {
  const auto t = trim(s);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

corpus::Token bare_token(std::string_view word, const corpus::Tagger& tagger) {
  corpus::Token t;
  t.surface = std::string(word);
  t.lemma = corpus::lemmatize(word);
  t.pos = tagger.tag_word(word);
  t.char_start = 0;
  t.char_end = word.size();
  return t;
}

std::optional<std::size_t> find_word(const corpus::Sentence& s, std::string_view word,
                                     std::optional<std::size_t> skip) {
  const auto lw = to_lower_ascii(word);
  const auto lemma = corpus::lemmatize(word);
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (skip && *skip == i) continue;
    if (to_lower_ascii(s.tokens[i].surface) == lw) return i;
  }
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (skip && *skip == i) continue;
    if (s.tokens[i].lemma == lemma) return i;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Pattern p) {
  for (const auto& [pat, name] : kPatternNames) {
    if (pat == p) return name;
  }
  return "ADJ_NOUN";
}

Pattern pattern_from_string(std::string_view name) {
  for (const auto& [pat, n] : kPatternNames) {
    if (n == name) return pat;
  }
  throw FormatError("unknown pair pattern '" + std::string(name) + "'");
}

bool satisfies_invariants(const WordPair& pair) {
  if (!(pair.w1_token < pair.w2_token)) return false;
  const Pos a = pair.w1.pos;
  const Pos b = pair.w2.pos;
  if (!corpus::is_content(a) || !corpus::is_content(b)) return false;
  switch (pair.pattern) {
    case Pattern::ADJ_NOUN:
      return a == Pos::ADJ && b == Pos::NOUN;
    case Pattern::NOUN_VERB:
      return a == Pos::NOUN && b == Pos::VERB;
    case Pattern::VERB_NOUN:
      return a == Pos::VERB && b == Pos::NOUN;
    case Pattern::ADV_VERB:
      return (a == Pos::ADV && b == Pos::VERB) || (a == Pos::VERB && b == Pos::ADV);
    case Pattern::NOUN_NOUN_COP:
      return a == Pos::NOUN && b == Pos::NOUN;
    case Pattern::SIMILE:
      return b == Pos::NOUN;
  }
  return false;
}

std::vector<PairDatasetRecord> load_pair_dataset(const std::filesystem::path& path, const ScoreRange& range) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open pair dataset " + path.string());
  std::vector<PairDatasetRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!is_valid_utf8(line)) throw FormatError(where + ": malformed UTF-8");
    const auto cells = split(line, '\t');
    if (cells.size() != 4) throw FormatError(where + ": expected 4 tab-separated fields");
    PairDatasetRecord r;
    r.sentence_text = cells[0];
    r.w1 = trim(cells[1]);
    r.w2 = trim(cells[2]);
    if (r.sentence_text.empty() || r.w1.empty() || r.w2.empty()) throw FormatError(where + ": empty field");
    if (!parse_score(cells[3], r.raw_score)) throw FormatError(where + ": non-numeric score");
    if (r.raw_score < range.min || r.raw_score > range.max) {
      throw FormatError(where + ": score outside raw range [" + std::to_string(range.min) + ", " +
                        std::to_string(range.max) + "]");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_pair_dataset(std::span<const PairDatasetRecord> records, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) {
    out += r.sentence_text + "\t" + r.w1 + "\t" + r.w2 + "\t" + Json(r.raw_score).dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<LabeledSentence> label_sentences(std::span<const PairDatasetRecord> records, double tau) {
  std::vector<LabeledSentence> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& r : records) {
    auto [it, inserted] = slot.try_emplace(r.sentence_text, out.size());
    if (inserted) out.push_back(LabeledSentence{r.sentence_text, 0});
    if (r.raw_score > tau) out[it->second].label = 1;
  }
  return out;
}

ml::Model train_detector(std::span<const LabeledSentence> labeled, const corpus::Tagger& tagger,
                         const lexicon::Lexicons& lexicons, const DetectorOptions& options) {
  bool positive = false;
  bool negative = false;
  std::vector<ml::Sample> samples;
  samples.reserve(labeled.size());
  for (const auto& ls : labeled) {
    (ls.label == 1 ? positive : negative) = true;
    const auto sentence = corpus::analyze_sentence(ls.sentence_text, tagger);
    samples.push_back({lexicon::sentence_features(sentence, lexicons).values, {ls.label == 1 ? 1.0 : 0.0}});
  }
  if (!positive || !negative) throw TrainingError("detector training data must contain both classes");
  ml::ModelSpec spec;
  spec.input_dim = lexicon::layout_length(lexicon::kSentenceSchema, lexicons.embeddings.dim());
  spec.hidden_dim = options.hidden_dim;
  spec.output_dim = 1;
  spec.task = ml::Task::binary_classification;
  spec.feature_schema_id = std::string(lexicon::kSentenceSchema);
  return ml::train(spec, samples, options.hyper);
}

double classify_sentence(const ml::Model& detector, const corpus::Sentence& sentence,
                         const lexicon::Lexicons& lexicons) {
  return detector.forward(lexicon::sentence_features(sentence, lexicons));
}

std::vector<WordPair> extract_pairs(const corpus::Sentence& sentence, std::string_view doc_id) {
  const auto& toks = sentence.tokens;
  const std::size_t n = toks.size();
  PairCollector out(sentence, doc_id);
  auto pos = [&](std::size_t i) { return toks[i].pos; };

  // (a) adjective modifying a following noun.
  for (std::size_t i = 0; i < n; ++i) {
    if (pos(i) != Pos::ADJ) continue;
    for (std::size_t j = i + 1; j < n && j <= i + 2; ++j) {
      if (pos(j) == Pos::VERB || pos(j) == Pos::PUNCT) break;
      if (pos(j) == Pos::NOUN) {
        out.add(i, j, Pattern::ADJ_NOUN);
        break;
      }
    }
  }
  // (b) subject proxy: nearest noun before a verb.
  for (std::size_t j = 0; j < n; ++j) {
    if (pos(j) != Pos::VERB) continue;
    for (std::size_t k = j; k-- > 0 && j - k <= 4;) {
      if (pos(k) == Pos::NOUN) {
        out.add(k, j, Pattern::NOUN_VERB);
        break;
      }
    }
  }
  // (c) object proxy: verb, optional determiners/adjectives, noun.
  for (std::size_t i = 0; i < n; ++i) {
    if (pos(i) != Pos::VERB) continue;
    for (std::size_t j = i + 1; j < n && j <= i + 3; ++j) {
      if (pos(j) == Pos::NOUN) {
        out.add(i, j, Pattern::VERB_NOUN);
        break;
      }
      if (pos(j) != Pos::DET && pos(j) != Pos::ADJ) break;
    }
  }
  // (d) adverb next to a verb.
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if ((pos(i) == Pos::ADV && pos(i + 1) == Pos::VERB) || (pos(i) == Pos::VERB && pos(i + 1) == Pos::ADV)) {
      out.add(i, i + 1, Pattern::ADV_VERB);
    }
  }
  // (e) noun, copula, noun; determiners/adjectives may precede the second noun.
  for (std::size_t i = 0; i + 2 < n; ++i) {
    if (pos(i) != Pos::NOUN || !is_copula(toks[i + 1])) continue;
    for (std::size_t j = i + 2; j < n && j <= i + 4; ++j) {
      if (pos(j) == Pos::NOUN) {
        out.add(i, j, Pattern::NOUN_NOUN_COP);
        break;
      }
      if (pos(j) != Pos::DET && pos(j) != Pos::ADJ) break;
    }
  }
  // (f) simile: content word, "like"/"as", first noun within four tokens.
  for (std::size_t i = 1; i < n; ++i) {
    if (!is_simile_marker(toks[i]) || !corpus::is_content(pos(i - 1))) continue;
    for (std::size_t j = i + 1; j < n && j <= i + 4; ++j) {
      if (pos(j) == Pos::NOUN) {
        out.add(i - 1, j, Pattern::SIMILE);
        break;
      }
    }
  }
  return out.take();
}

lexicon::PairWords pair_words(const WordPair& pair) {
  return lexicon::PairWords{pair.w1, pair.w2, pattern_index(pair.pattern)};
}

lexicon::PairWords record_pair_words(const PairDatasetRecord& record, const corpus::Tagger& tagger) {
  const auto sentence = corpus::analyze_sentence(record.sentence_text, tagger);
  const auto i1 = find_word(sentence, record.w1, std::nullopt);
  const auto i2 = find_word(sentence, record.w2, i1);
  lexicon::PairWords words;
  words.w1 = i1 ? sentence.tokens[*i1] : bare_token(record.w1, tagger);
  words.w2 = i2 ? sentence.tokens[*i2] : bare_token(record.w2, tagger);
  if (i1 && i2) {
    const auto lo = std::min(*i1, *i2);
    const auto hi = std::max(*i1, *i2);
    for (const auto& p : extract_pairs(sentence)) {
      if (p.w1_token == lo && p.w2_token == hi) {
        words.pattern_index = pattern_index(p.pattern);
        break;
      }
    }
  }
  return words;
}

ml::Model train_scorer(std::span<const PairDatasetRecord> records, const corpus::Tagger& tagger,
                       const lexicon::Lexicons& lexicons, const ScorerOptions& options) {
  if (records.empty()) throw TrainingError("scorer training data is empty");
  std::vector<ml::Sample> samples;
  samples.reserve(records.size());
  for (const auto& r : records) {
    const double normalized = std::clamp(options.range.normalize(r.raw_score), 0.0, 1.0);
    samples.push_back({lexicon::pair_features(record_pair_words(r, tagger), lexicons).values, {2.0 * normalized - 1.0}});
  }
  ml::ModelSpec spec;
  spec.input_dim = lexicon::layout_length(lexicon::kPairSchema, lexicons.embeddings.dim());
  spec.hidden_dim = options.hidden_dim;
  spec.output_dim = 1;
  spec.task = ml::Task::regression;
  spec.feature_schema_id = std::string(lexicon::kPairSchema);
  spec.output_min = -1.0;
  spec.output_max = 1.0;
  return ml::train(spec, samples, options.hyper);
}

ScoredPair score_pair(const ml::Model& scorer, const WordPair& pair, const lexicon::Lexicons& lexicons,
                      const ScoreRange& range) {
  const double centred = scorer.forward(lexicon::pair_features(pair_words(pair), lexicons));
  ScoredPair out;
  out.pair = pair;
  out.novelty = std::clamp(0.5 * (centred + 1.0), 0.0, 1.0);
  out.raw_novelty = range.denormalize(out.novelty);
  return out;
}

bool chronological_less(const WordPair& a, const WordPair& b) {
  return std::tie(a.sentence_index, a.w1_token, a.w2_token) < std::tie(b.sentence_index, b.w1_token, b.w2_token);
}

std::vector<ScoredPair> score_document(const corpus::Document& doc, const ml::Model& detector,
                                       const ml::Model& scorer, const lexicon::Lexicons& lexicons,
                                       const PipelineConfig& config) {
  std::vector<ScoredPair> out;
  for (const auto& sentence : doc.sentences) {
    if (classify_sentence(detector, sentence, lexicons) < config.detector_threshold) continue;
    for (const auto& pair : extract_pairs(sentence, doc.doc_id)) {
      out.push_back(score_pair(scorer, pair, lexicons, config.range));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ScoredPair& a, const ScoredPair& b) { return chronological_less(a.pair, b.pair); });
  return out;
}

Json to_json(const WordPair& pair) {
  return Json{{"doc_id", pair.doc_id},
              {"sentence_index", pair.sentence_index},
              {"w1_token", pair.w1_token},
              {"w2_token", pair.w2_token},
              {"pattern", std::string(to_string(pair.pattern))},
              {"w1", corpus::to_json(pair.w1)},
              {"w2", corpus::to_json(pair.w2)},
              {"sentence_text", pair.sentence_text}};
}

Json to_json(const ScoredPair& scored) {
  return Json{{"pair", to_json(scored.pair)}, {"novelty", scored.novelty}, {"raw_novelty", scored.raw_novelty}};
}

WordPair word_pair_from_json(const Json& j) {
  WordPair p;
  p.doc_id = j.at("doc_id").get<std::string>();
  p.sentence_index = j.at("sentence_index").get<std::size_t>();
  p.w1_token = j.at("w1_token").get<std::size_t>();
  p.w2_token = j.at("w2_token").get<std::size_t>();
  p.pattern = pattern_from_string(j.at("pattern").get<std::string>());
  p.w1 = corpus::token_from_json(j.at("w1"));
  p.w2 = corpus::token_from_json(j.at("w2"));
  p.sentence_text = j.at("sentence_text").get<std::string>();
  return p;
}

ScoredPair scored_pair_from_json(const Json& j) {
  ScoredPair s;
  s.pair = word_pair_from_json(j.at("pair"));
  s.novelty = j.at("novelty").get<double>();
  s.raw_novelty = j.at("raw_novelty").get<double>();
  return s;
}

std::string to_jsonl(std::span<const ScoredPair> pairs) {
  std::string out;
  for (const auto& p : pairs) out += to_json(p).dump() + "\n";
  return out;
}

std::vector<ScoredPair> scored_pairs_from_jsonl(std::string_view text) {
  std::vector<ScoredPair> out;
  std::size_t lineno = 0;
  for (const auto& line : split(text, '\n')) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(scored_pair_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("scored pairs line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<PairDatasetRecord> synthesize_pair_dataset(std::span<const corpus::Sentence> sentences,
                                                       const lexicon::Lexicons& lexicons,
                                                       const SyntheticDatasetOptions& options) {
  // Bonus per pattern, in Pattern order; similes and copular identities are
  // the classic novel-metaphor frames.
  constexpr std::array<double, lexicon::kPatternCount> kBonus{0.05, 0.0, 0.0, 0.0, 0.2, 0.3};
  Rng rng(options.seed);
  std::vector<PairDatasetRecord> out;
  for (const auto& sentence : sentences) {
    auto pairs = extract_pairs(sentence);
    rng.shuffle(pairs);
    if (pairs.size() > options.max_pairs_per_sentence) pairs.resize(options.max_pairs_per_sentence);
    std::sort(pairs.begin(), pairs.end(), chronological_less);
    for (const auto& p : pairs) {
      const auto n1 = lexicon::word_norms(lexicons.norms, p.w1);
      const auto n2 = lexicon::word_norms(lexicons.norms, p.w2);
      const double gap = (n1 && n2) ? std::abs((*n1)[0] - (*n2)[0]) : 0.0;
      const auto v1 = lexicon::word_vector(lexicons.embeddings, p.w1);
      const auto v2 = lexicon::word_vector(lexicons.embeddings, p.w2);
      const double distance = (v1 && v2) ? 0.5 * (1.0 - lexicon::cosine(*v1, *v2)) : 0.5;
      double score = 0.1 + 0.5 * gap + 0.3 * distance + kBonus[pattern_index(p.pattern)];
      score += options.noise * (2.0 * rng.uniform() - 1.0);
      score = std::clamp(score, 0.0, 1.0);
      out.push_back(PairDatasetRecord{p.sentence_text, p.w1.surface, p.w2.surface, options.range.denormalize(score)});
    }
  }
  return out;
}

}  // namespace mc::metaphor
