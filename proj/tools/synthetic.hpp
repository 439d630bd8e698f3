#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mc/corpus.hpp"
#include "mc/lexicon.hpp"

// Deterministic stand-ins for the external lexical resources. Words hash
// into clusters; vectors scatter around a cluster centre and concreteness
// follows the cluster, so cross-cluster pairs look "far" on both axes.
namespace mc::synthetic {

struct LexiconOptions {
  std::size_t dim = 16;
  std::size_t clusters = 8;
  double spread = 0.35;
  std::uint64_t seed = 0;
};

std::uint64_t word_hash(std::string_view word);

// Lowercased alphabetic word tokens of the documents, sorted and unique.
std::vector<std::string> vocabulary(const std::vector<corpus::Document>& docs);

lexicon::EmbeddingTable embeddings(const std::vector<std::string>& words, const LexiconOptions& options);

// CSV in the load_norms layout, raw values on a declared 100..700 scale.
std::string norms_csv(const std::vector<std::string>& words, const LexiconOptions& options);

}  // namespace mc::synthetic
