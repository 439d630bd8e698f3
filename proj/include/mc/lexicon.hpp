#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mc/corpus.hpp"

// Word embeddings, psycholinguistic norms and the feature layouts built
// from them.
namespace mc::lexicon {

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  // Replaces an existing entry; counted in duplicates().
  void insert(std::string word, std::vector<float> values);
  std::size_t duplicates() const { return duplicates_; }

  // Exact-case lookup, then lowercase fallback.
  std::optional<std::span<const float>> vector(std::string_view word) const;

  const std::unordered_map<std::string, std::vector<float>>& entries() const { return entries_; }
  // Words in lexicographic order, for deterministic serialization.
  std::vector<std::string> sorted_words() const;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<float>> entries_;
  std::size_t duplicates_ = 0;
};

enum class EmbeddingFormat { text, binary };

// Text: header `count dim`, then `word v1 .. vdim` lines. Binary: same header
// line, then per entry the word bytes, 0x20, and dim little-endian float32.
EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path, EmbeddingFormat format);

// dot(a,b)/(|a||b|); 0 when either side is the zero vector.
// Throws ContractViolation on a length mismatch.
double cosine(std::span<const float> a, std::span<const float> b);
double cosine(std::span<const double> a, std::span<const double> b);

inline constexpr std::size_t kNormCount = 4;
inline constexpr std::array<std::string_view, kNormCount> kNormNames{"concreteness", "imageability", "familiarity",
                                                                     "aoa"};

// Normalized to [0,1], ordered as kNormNames.
using NormRecord = std::array<double, kNormCount>;

class NormTable {
 public:
  void insert(std::string word, NormRecord record);
  std::optional<NormRecord> lookup(std::string_view word) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t duplicates() const { return duplicates_; }
  const std::unordered_map<std::string, NormRecord>& entries() const { return entries_; }

 private:
  std::unordered_map<std::string, NormRecord> entries_;
  std::size_t duplicates_ = 0;
};

// CSV `word,concreteness,imageability,familiarity,aoa` with a header row. An
// optional `# ranges concreteness=100:700 ...` comment declares raw ranges;
// columns without a declaration are min-max scaled over observed values.
NormTable load_norms(const std::filesystem::path& path);

struct Lexicons {
  EmbeddingTable embeddings;
  NormTable norms;
};

inline constexpr std::string_view kSentenceSchema = "sent.v1";
inline constexpr std::string_view kPairSchema = "pair.v1";

struct FeatureVector {
  std::vector<double> values;
  std::string schema_id;
};

// Registered layout length for a schema at embedding dimension dim.
// Throws ContractViolation for an unknown schema.
std::size_t layout_length(std::string_view schema_id, std::size_t embedding_dim);

// Surface lookup with lemma fallback.
std::optional<std::span<const float>> word_vector(const EmbeddingTable& table, const corpus::Token& token);
std::optional<NormRecord> word_norms(const NormTable& norms, const corpus::Token& token);

// [mean content-word embedding] ++ [mean,max,min per norm] ++ [embedding
// hit-rate, norm hit-rate]; dim + 14 values.
FeatureVector sentence_features(const corpus::Sentence& sentence, const Lexicons& lexicons);

// The six pair patterns, in one-hot order.
inline constexpr std::size_t kPatternCount = 6;

struct PairWords {
  corpus::Token w1;
  corpus::Token w2;
  // Index into the pattern one-hot; absent leaves the block zero.
  std::optional<std::size_t> pattern_index;
};

// [emb w1] ++ [emb w2] ++ [cosine] ++ [norms w1] ++ [norms w2] ++
// [|norm differences|] ++ [pattern one-hot]; 2*dim + 19 values.
FeatureVector pair_features(const PairWords& pair, const Lexicons& lexicons);

}  // namespace mc::lexicon
