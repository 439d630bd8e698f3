#include "mc/qgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "mc/error.hpp"

namespace mc::qgen {

using metaphor::ScoredPair;
using metaphor::WordPair;

namespace {

bool has_word_char(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || std::isalnum(u);
  });
}

void add_into(std::vector<double>& acc, std::span<const float> v) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
}

std::string replace_all(std::string text, std::string_view slot, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
  return text;
}

bool icontains(std::string_view haystack, std::string_view needle) {
  return to_lower_ascii(haystack).find(to_lower_ascii(needle)) != std::string::npos;
}

void validate_template(const Template& t) {
  const bool sentence = t.text.find("{sentence}") != std::string::npos;
  const bool words = t.text.find("{w1}") != std::string::npos && t.text.find("{w2}") != std::string::npos;
  if (t.id.empty() || (!sentence && !words)) {
    throw ConfigError("template '" + t.id + "' must contain {sentence} or both {w1} and {w2}");
  }
}

}  // namespace

void SelectionConfig::validate() const {
  if (!(w_novelty >= 0) || !(w_pair_sim >= 0) || !(w_sent_sim >= 0)) {
    throw ContractViolation("selection weights must be non-negative");
  }
  if (!(seconds_per_question > 0)) throw ContractViolation("seconds_per_question must be positive");
  if (!(min_novelty >= 0 && min_novelty <= 1)) throw ContractViolation("min_novelty must lie in [0,1]");
}

Json to_json(const SelectionConfig& cfg) {
  return Json{{"w_novelty", cfg.w_novelty},
              {"w_pair_sim", cfg.w_pair_sim},
              {"w_sent_sim", cfg.w_sent_sim},
              {"seconds_per_question", cfg.seconds_per_question},
              {"min_novelty", cfg.min_novelty}};
}

SelectionConfig selection_config_from_json(const Json& j) {
  SelectionConfig cfg;
  cfg.w_novelty = j.value("w_novelty", cfg.w_novelty);
  cfg.w_pair_sim = j.value("w_pair_sim", cfg.w_pair_sim);
  cfg.w_sent_sim = j.value("w_sent_sim", cfg.w_sent_sim);
  cfg.seconds_per_question = j.value("seconds_per_question", cfg.seconds_per_question);
  cfg.min_novelty = j.value("min_novelty", cfg.min_novelty);
  cfg.validate();
  return cfg;
}

std::optional<std::vector<double>> pair_embedding(const WordPair& pair, const lexicon::EmbeddingTable& embeddings) {
  if (embeddings.dim() == 0) return std::nullopt;
  std::vector<double> acc(embeddings.dim(), 0.0);
  int hits = 0;
  for (const auto* tok : {&pair.w1, &pair.w2}) {
    if (auto v = lexicon::word_vector(embeddings, *tok)) {
      add_into(acc, *v);
      ++hits;
    }
  }
  if (hits == 0) return std::nullopt;
  for (auto& a : acc) a /= hits;
  return acc;
}

std::optional<std::vector<double>> sentence_embedding(std::string_view sentence_text,
                                                      const lexicon::EmbeddingTable& embeddings) {
  if (embeddings.dim() == 0) return std::nullopt;
  std::vector<double> acc(embeddings.dim(), 0.0);
  std::size_t hits = 0;
  for (const auto& tok : corpus::tokenize(sentence_text)) {
    if (!has_word_char(tok.surface)) continue;
    if (auto v = lexicon::word_vector(embeddings, tok)) {
      add_into(acc, *v);
      ++hits;
    }
  }
  if (hits == 0) return std::nullopt;
  for (auto& a : acc) a /= static_cast<double>(hits);
  return acc;
}

namespace {

struct HistoryVectors {
  std::vector<std::optional<std::vector<double>>> pairs;
  std::vector<std::optional<std::vector<double>>> sentences;
};

HistoryVectors history_vectors(std::span<const ScoredPair> history, const lexicon::EmbeddingTable& embeddings) {
  HistoryVectors hv;
  for (const auto& h : history) {
    hv.pairs.push_back(pair_embedding(h.pair, embeddings));
    hv.sentences.push_back(sentence_embedding(h.pair.sentence_text, embeddings));
  }
  return hv;
}

double max_similarity(const std::optional<std::vector<double>>& v,
                      const std::vector<std::optional<std::vector<double>>>& others) {
  if (!v) return 0.0;
  bool any = false;
  double best = 0.0;
  for (const auto& o : others) {
    if (!o) continue;
    const double c = lexicon::cosine(std::span<const double>(*v), std::span<const double>(*o));
    best = any ? std::max(best, c) : c;
    any = true;
  }
  return any ? best : 0.0;
}

Utility utility_with(const ScoredPair& candidate, const HistoryVectors& hv, const SelectionConfig& cfg,
                     const lexicon::EmbeddingTable& embeddings) {
  Utility u;
  u.max_pair_sim = max_similarity(pair_embedding(candidate.pair, embeddings), hv.pairs);
  u.max_sent_sim = max_similarity(sentence_embedding(candidate.pair.sentence_text, embeddings), hv.sentences);
  u.value = cfg.w_novelty * candidate.novelty - cfg.w_pair_sim * u.max_pair_sim - cfg.w_sent_sim * u.max_sent_sim;
  return u;
}

}  // namespace

Utility utility(const ScoredPair& candidate, std::span<const ScoredPair> history, const SelectionConfig& cfg,
                const lexicon::EmbeddingTable& embeddings) {
  return utility_with(candidate, history_vectors(history, embeddings), cfg, embeddings);
}

std::optional<ScoredPair> select_next(std::span<const ScoredPair> candidates, std::span<const ScoredPair> history,
                                      double remaining_seconds, const SelectionConfig& cfg,
                                      const lexicon::EmbeddingTable& embeddings) {
  cfg.validate();
  if (!(remaining_seconds >= cfg.seconds_per_question)) return std::nullopt;
  const auto hv = history_vectors(history, embeddings);
  const double tie_tolerance = 1e-12 * (cfg.w_novelty + cfg.w_pair_sim + cfg.w_sent_sim);

  std::vector<const ScoredPair*> eligible;
  for (const auto& c : candidates) {
    if (c.novelty < cfg.min_novelty) continue;
    const bool seen = std::any_of(history.begin(), history.end(),
                                  [&](const ScoredPair& h) { return h.pair.same_slot(c.pair); });
    if (!seen) eligible.push_back(&c);
  }
  std::stable_sort(eligible.begin(), eligible.end(), [](const ScoredPair* a, const ScoredPair* b) {
    return metaphor::chronological_less(a->pair, b->pair);
  });

  const ScoredPair* best = nullptr;
  double best_value = 0.0;
  for (const auto* c : eligible) {
    const double value = utility_with(*c, hv, cfg, embeddings).value;
    if (best == nullptr || value > best_value + tie_tolerance) {
      best = c;
      best_value = value;
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

bool Template::accepts(metaphor::Pattern p) const {
  return patterns.empty() || std::find(patterns.begin(), patterns.end(), p) != patterns.end();
}

TemplateBank::TemplateBank(std::vector<Template> templates) : templates_(std::move(templates)) {
  for (const auto& t : templates_) validate_template(t);
}

TemplateBank TemplateBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open template bank " + path.string());
  std::vector<Template> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cells = split(line, '\t');
    if (cells.size() != 3) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected id<TAB>patterns<TAB>text");
    }
    Template tpl;
    tpl.id = trim(cells[0]);
    const auto patterns = trim(cells[1]);
    if (patterns != "*") {
      for (const auto& p : split(patterns, ',')) {
        try {
          tpl.patterns.push_back(metaphor::pattern_from_string(trim(p)));
        } catch (const FormatError& e) {
          throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
      }
    }
    tpl.text = trim(cells[2]);
    out.push_back(std::move(tpl));
  }
  return TemplateBank(std::move(out));
}

TemplateBank TemplateBank::defaults() {
  return TemplateBank({
      {"T1", {}, "When the author wrote \"{sentence}\", what do you think they were trying to say?"},
      {"T2", {}, "Why do you think the author chose to connect \"{w1}\" with \"{w2}\" here?"},
      {"T3", {}, "What image do you think the author wanted to create by using \"{w2}\" to describe \"{w1}\"?"},
      {"T4", {}, "What does the author's choice of the word \"{w2}\" suggest about {w1}?"},
  });
}

std::vector<const Template*> TemplateBank::compatible(metaphor::Pattern p) const {
  std::vector<const Template*> out;
  for (const auto& t : templates_) {
    if (t.accepts(p)) out.push_back(&t);
  }
  return out;
}

bool satisfies_invariants(const QtAQuestion& q) {
  if (q.text.empty() || q.text.back() != '?') return false;
  const bool words = icontains(q.text, q.pair().w1.surface) && icontains(q.text, q.pair().w2.surface);
  const bool quote = icontains(q.text, q.source_sentence);
  return words || quote;
}

std::string question_id_for(const WordPair& pair) {
  return "q-" + std::to_string(pair.sentence_index) + "-" + std::to_string(pair.w1_token) + "-" +
         std::to_string(pair.w2_token);
}

QtAQuestion generate_question(const ScoredPair& pair, std::uint64_t seed, const TemplateBank& bank) {
  if (bank.empty()) throw ConfigError("template bank is empty");
  const auto options = bank.compatible(pair.pair.pattern);
  if (options.empty()) {
    throw ConfigError("no template accepts pattern " + std::string(metaphor::to_string(pair.pair.pattern)));
  }
  const Template& tpl = *options[seed % options.size()];
  std::string text = tpl.text;
  text = replace_all(std::move(text), "{sentence}", pair.pair.sentence_text);
  text = replace_all(std::move(text), "{w1}", pair.pair.w1.surface);
  text = replace_all(std::move(text), "{w2}", pair.pair.w2.surface);
  text = trim(text);
  if (!text.empty() && std::islower(static_cast<unsigned char>(text[0]))) {
    text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
  }
  if (text.empty() || text.back() != '?') {
    if (!text.empty() && (text.back() == '.' || text.back() == '!')) text.pop_back();
    text.push_back('?');
  }
  QtAQuestion q;
  q.question_id = question_id_for(pair.pair);
  q.text = std::move(text);
  q.scored = pair;
  q.template_id = tpl.id;
  q.source_sentence = pair.pair.sentence_text;
  return q;
}

QtAQuestion generate_question(const ScoredPair& pair, std::uint64_t seed) {
  static const TemplateBank kDefaults = TemplateBank::defaults();
  return generate_question(pair, seed, kDefaults);
}

const QtAQuestion* QuestionBank::find(std::string_view question_id) const {
  for (const auto& q : questions) {
    if (q.question_id == question_id) return &q;
  }
  return nullptr;
}

QuestionBank bank_from_candidates(std::string doc_id, std::span<const ScoredPair> candidates,
                                  const lexicon::EmbeddingTable& embeddings, const TemplateBank& templates,
                                  const SelectionConfig& cfg, double session_seconds, std::uint64_t seed,
                                  std::string created_at) {
  QuestionBank bank;
  bank.doc_id = std::move(doc_id);
  bank.created_at = std::move(created_at);
  bank.config = cfg;
  bank.session_seconds = session_seconds;
  bank.seed = seed;

  std::vector<ScoredPair> remaining(candidates.begin(), candidates.end());
  std::vector<ScoredPair> history;
  double budget = session_seconds;
  while (auto pick = select_next(remaining, history, budget, cfg, embeddings)) {
    bank.questions.push_back(generate_question(*pick, seed + history.size(), templates));
    history.push_back(*pick);
    std::erase_if(remaining, [&](const ScoredPair& c) { return c.pair.same_slot(pick->pair); });
    budget -= cfg.seconds_per_question;
  }
  return bank;
}

QuestionBank build_question_bank(const BankInputs& inputs, const metaphor::PipelineConfig& pipeline,
                                 const SelectionConfig& cfg, double session_seconds, std::uint64_t seed,
                                 std::string created_at) {
  const auto scored = metaphor::score_document(inputs.doc, inputs.detector, inputs.scorer, inputs.lexicons, pipeline);
  return bank_from_candidates(inputs.doc.doc_id, scored, inputs.lexicons.embeddings, inputs.templates, cfg,
                              session_seconds, seed, std::move(created_at));
}

Json to_json(const QtAQuestion& q) {
  return Json{{"question_id", q.question_id},
              {"text", q.text},
              {"template_id", q.template_id},
              {"source_sentence", q.source_sentence},
              {"scored_pair", metaphor::to_json(q.scored)}};
}

Json to_json(const QuestionBank& bank) {
  Json questions = Json::array();
  for (const auto& q : bank.questions) questions.push_back(to_json(q));
  return Json{{"doc_id", bank.doc_id},
              {"created_at", bank.created_at},
              {"session_seconds", bank.session_seconds},
              {"seed", bank.seed},
              {"config", to_json(bank.config)},
              {"questions", std::move(questions)}};
}

QtAQuestion question_from_json(const Json& j) {
  QtAQuestion q;
  q.question_id = j.at("question_id").get<std::string>();
  q.text = j.at("text").get<std::string>();
  q.template_id = j.at("template_id").get<std::string>();
  q.source_sentence = j.at("source_sentence").get<std::string>();
  q.scored = metaphor::scored_pair_from_json(j.at("scored_pair"));
  return q;
}

QuestionBank question_bank_from_json(const Json& j) {
  try {
    QuestionBank bank;
    bank.doc_id = j.at("doc_id").get<std::string>();
    bank.created_at = j.at("created_at").get<std::string>();
    bank.session_seconds = j.at("session_seconds").get<double>();
    bank.seed = j.at("seed").get<std::uint64_t>();
    bank.config = selection_config_from_json(j.at("config"));
    for (const auto& q : j.at("questions")) bank.questions.push_back(question_from_json(q));
    return bank;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid question bank: ") + e.what());
  }
}

void save_question_bank(const QuestionBank& bank, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(bank).dump(1) + "\n");
}

QuestionBank load_question_bank(const std::filesystem::path& path) {
  try {
    return question_bank_from_json(Json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace mc::qgen
