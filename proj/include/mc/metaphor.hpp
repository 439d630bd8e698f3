#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mc/corpus.hpp"
#include "mc/lexicon.hpp"
#include "mc/mlcore.hpp"

// Sentence labelling, novel-metaphor sentence detection, content-word pair
// extraction and pair novelty scoring.
namespace mc::metaphor {

enum class Pattern { ADJ_NOUN, NOUN_VERB, VERB_NOUN, ADV_VERB, NOUN_NOUN_COP, SIMILE };

std::string_view to_string(Pattern p);
Pattern pattern_from_string(std::string_view name);
inline std::size_t pattern_index(Pattern p) { return static_cast<std::size_t>(p); }

struct WordPair {
  std::string doc_id;
  std::size_t sentence_index = 0;
  std::size_t w1_token = 0;  // w1_token < w2_token
  std::size_t w2_token = 0;
  Pattern pattern = Pattern::ADJ_NOUN;
  // Provenance carried along so downstream stages need no document lookup.
  corpus::Token w1;
  corpus::Token w2;
  std::string sentence_text;

  bool same_slot(const WordPair& other) const {
    return doc_id == other.doc_id && sentence_index == other.sentence_index && w1_token == other.w1_token &&
           w2_token == other.w2_token;
  }
  bool operator==(const WordPair&) const = default;
};

// Content-word classes, ordering and pattern/class agreement.
bool satisfies_invariants(const WordPair& pair);

struct ScoreRange {
  double min = 0.0;
  double max = 3.0;

  double midpoint() const { return 0.5 * (min + max); }
  double normalize(double raw) const { return (raw - min) / (max - min); }
  double denormalize(double novelty) const { return min + novelty * (max - min); }
  bool operator==(const ScoreRange&) const = default;
};

struct ScoredPair {
  WordPair pair;
  double novelty = 0.0;      // [0,1]
  double raw_novelty = 0.0;  // in the configured raw range

  bool operator==(const ScoredPair&) const = default;
};

struct PairDatasetRecord {
  std::string sentence_text;
  std::string w1;
  std::string w2;
  double raw_score = 0.0;
};

struct LabeledSentence {
  std::string sentence_text;
  int label = 0;

  bool operator==(const LabeledSentence&) const = default;
};

// TSV `sentence_text<TAB>w1<TAB>w2<TAB>raw_score`. Scores outside range are a
// FormatError naming the line.
std::vector<PairDatasetRecord> load_pair_dataset(const std::filesystem::path& path, const ScoreRange& range);
void save_pair_dataset(std::span<const PairDatasetRecord> records, const std::filesystem::path& path);

// Label 1 iff some pair of the sentence scores strictly above tau; sentences
// in order of first appearance.
std::vector<LabeledSentence> label_sentences(std::span<const PairDatasetRecord> records, double tau);

struct DetectorOptions {
  std::size_t hidden_dim = 0;
  ml::Hyperparams hyper{0.5, 200, 16, 1e-4, 0};
};

ml::Model train_detector(std::span<const LabeledSentence> labeled, const corpus::Tagger& tagger,
                         const lexicon::Lexicons& lexicons, const DetectorOptions& options);

// Probability that the sentence contains a novel metaphor.
double classify_sentence(const ml::Model& detector, const corpus::Sentence& sentence,
                         const lexicon::Lexicons& lexicons);

std::vector<WordPair> extract_pairs(const corpus::Sentence& sentence, std::string_view doc_id = {});

lexicon::PairWords pair_words(const WordPair& pair);

struct ScorerOptions {
  std::size_t hidden_dim = 0;
  ml::Hyperparams hyper{0.05, 300, 16, 1e-4, 0};
  ScoreRange range;
};

// Feature input for a dataset record: the record's words located in its
// tagged sentence. Words missing from the sentence are used bare.
lexicon::PairWords record_pair_words(const PairDatasetRecord& record, const corpus::Tagger& tagger);

// Regression on the centred target 2*normalized - 1 so an all-zero model
// predicts the range midpoint.
ml::Model train_scorer(std::span<const PairDatasetRecord> records, const corpus::Tagger& tagger,
                       const lexicon::Lexicons& lexicons, const ScorerOptions& options);

ScoredPair score_pair(const ml::Model& scorer, const WordPair& pair, const lexicon::Lexicons& lexicons,
                      const ScoreRange& range);

struct PipelineConfig {
  double detector_threshold = 0.5;
  ScoreRange range;
};

// Pairs of every sentence whose detector probability is >= threshold,
// scored, in (sentence_index, w1_token, w2_token) order.
std::vector<ScoredPair> score_document(const corpus::Document& doc, const ml::Model& detector,
                                       const ml::Model& scorer, const lexicon::Lexicons& lexicons,
                                       const PipelineConfig& config);

// Strict chronological order used throughout.
bool chronological_less(const WordPair& a, const WordPair& b);

Json to_json(const WordPair& pair);
Json to_json(const ScoredPair& scored);
WordPair word_pair_from_json(const Json& j);
ScoredPair scored_pair_from_json(const Json& j);

// One ScoredPair per line.
std::string to_jsonl(std::span<const ScoredPair> pairs);
std::vector<ScoredPair> scored_pairs_from_jsonl(std::string_view text);

// Synthetic stand-in for the external novelty datasets: takes the extracted
// pairs of the given sentences and scores them from the concreteness gap,
// embedding distance and pattern of each pair, with seeded noise.
struct SyntheticDatasetOptions {
  std::size_t max_pairs_per_sentence = 4;
  double noise = 0.1;
  std::uint64_t seed = 0;
  ScoreRange range;
};

std::vector<PairDatasetRecord> synthesize_pair_dataset(std::span<const corpus::Sentence> sentences,
                                                       const lexicon::Lexicons& lexicons,
                                                       const SyntheticDatasetOptions& options);

}  // namespace mc::metaphor
