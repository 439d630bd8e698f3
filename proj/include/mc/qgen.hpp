#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mc/metaphor.hpp"

// Picks which scored pair to discuss next under a time budget and turns it
// into a Questioning-the-Author question.
namespace mc::qgen {

struct SelectionConfig {
  double w_novelty = 1.0;
  double w_pair_sim = 0.5;
  double w_sent_sim = 0.5;
  double seconds_per_question = 120.0;
  double min_novelty = 0.6;

  void validate() const;
  bool operator==(const SelectionConfig&) const = default;
};

Json to_json(const SelectionConfig& cfg);
SelectionConfig selection_config_from_json(const Json& j);

// Utility of one candidate against the discussion history:
// w_novelty*novelty - w_pair_sim*maxPairSim - w_sent_sim*maxSentSim.
struct Utility {
  double value = 0.0;
  double max_pair_sim = 0.0;
  double max_sent_sim = 0.0;
};

Utility utility(const metaphor::ScoredPair& candidate, std::span<const metaphor::ScoredPair> history,
                const SelectionConfig& cfg, const lexicon::EmbeddingTable& embeddings);

// Mean of the two word vectors; absent when neither is in the table.
std::optional<std::vector<double>> pair_embedding(const metaphor::WordPair& pair,
                                                  const lexicon::EmbeddingTable& embeddings);
// Mean over the sentence's word tokens found in the table.
std::optional<std::vector<double>> sentence_embedding(std::string_view sentence_text,
                                                      const lexicon::EmbeddingTable& embeddings);

// Highest-utility candidate with novelty >= min_novelty, or none when the
// remaining budget cannot fit another question. Utilities within 1e-12 of
// the total weight count as ties and go to the chronologically earlier pair.
std::optional<metaphor::ScoredPair> select_next(std::span<const metaphor::ScoredPair> candidates,
                                                std::span<const metaphor::ScoredPair> history,
                                                double remaining_seconds, const SelectionConfig& cfg,
                                                const lexicon::EmbeddingTable& embeddings);

struct Template {
  std::string id;
  // Empty means compatible with every pattern.
  std::vector<metaphor::Pattern> patterns;
  std::string text;  // {w1}, {w2}, {sentence} slots

  bool accepts(metaphor::Pattern p) const;
};

class TemplateBank {
 public:
  TemplateBank() = default;
  explicit TemplateBank(std::vector<Template> templates);

  // `template_id<TAB>patterns<TAB>text`; patterns is a comma list or `*`.
  static TemplateBank load(const std::filesystem::path& path);
  // T1-T4.
  static TemplateBank defaults();

  const std::vector<Template>& templates() const { return templates_; }
  bool empty() const { return templates_.empty(); }
  std::vector<const Template*> compatible(metaphor::Pattern p) const;

 private:
  std::vector<Template> templates_;
};

struct QtAQuestion {
  std::string question_id;
  std::string text;
  metaphor::ScoredPair scored;
  std::string template_id;
  std::string source_sentence;

  const metaphor::WordPair& pair() const { return scored.pair; }
  bool operator==(const QtAQuestion&) const = default;
};

// Ends with '?' and contains both pair surfaces or the quoted sentence.
bool satisfies_invariants(const QtAQuestion& q);

// Stable id derived from the pair's slot.
std::string question_id_for(const metaphor::WordPair& pair);

// Seeded rotation over the templates compatible with the pair's pattern.
// Throws ConfigError when no template fits.
QtAQuestion generate_question(const metaphor::ScoredPair& pair, std::uint64_t seed, const TemplateBank& bank);
QtAQuestion generate_question(const metaphor::ScoredPair& pair, std::uint64_t seed);

struct QuestionBank {
  std::string doc_id;
  std::vector<QtAQuestion> questions;
  std::string created_at;
  SelectionConfig config;
  double session_seconds = 0.0;
  std::uint64_t seed = 0;

  const QtAQuestion* find(std::string_view question_id) const;
  bool operator==(const QuestionBank&) const = default;
};

struct BankInputs {
  const corpus::Document& doc;
  const ml::Model& detector;
  const ml::Model& scorer;
  const lexicon::Lexicons& lexicons;
  const TemplateBank& templates;
};

// score_document, then select/generate until the simulated budget or the
// candidates run out.
QuestionBank build_question_bank(const BankInputs& inputs, const metaphor::PipelineConfig& pipeline,
                                 const SelectionConfig& cfg, double session_seconds, std::uint64_t seed,
                                 std::string created_at);

// Selection loop on already-scored candidates.
QuestionBank bank_from_candidates(std::string doc_id, std::span<const metaphor::ScoredPair> candidates,
                                  const lexicon::EmbeddingTable& embeddings, const TemplateBank& templates,
                                  const SelectionConfig& cfg, double session_seconds, std::uint64_t seed,
                                  std::string created_at);

Json to_json(const QtAQuestion& q);
Json to_json(const QuestionBank& bank);
QtAQuestion question_from_json(const Json& j);
QuestionBank question_bank_from_json(const Json& j);
void save_question_bank(const QuestionBank& bank, const std::filesystem::path& path);
QuestionBank load_question_bank(const std::filesystem::path& path);

}  // namespace mc::qgen
