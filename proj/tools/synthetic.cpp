#include "synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

#include "mc/util.hpp"

namespace mc::synthetic {

namespace {

std::size_t cluster_of(std::string_view word, const LexiconOptions& o) {
  return static_cast<std::size_t>(mix64(o.seed, word_hash(word)) % o.clusters);
}

}  // namespace

std::uint64_t word_hash(std::string_view word) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : word) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> vocabulary(const std::vector<corpus::Document>& docs) {
  std::set<std::string> words;
  for (const auto& doc : docs) {
    for (const auto& s : doc.sentences) {
      for (const auto& t : s.tokens) {
        std::string w = to_lower_ascii(t.surface);
        const bool alpha = !w.empty() && std::all_of(w.begin(), w.end(), [](unsigned char c) {
          return std::isalpha(c) || c == '\'' || c == '-';
        });
        if (alpha && std::isalpha(static_cast<unsigned char>(w[0]))) words.insert(w);
        if (alpha && t.lemma != w && !t.lemma.empty()) words.insert(t.lemma);
      }
    }
  }
  return {words.begin(), words.end()};
}

lexicon::EmbeddingTable embeddings(const std::vector<std::string>& words, const LexiconOptions& o) {
  std::vector<std::vector<double>> centres(o.clusters, std::vector<double>(o.dim));
  for (std::size_t c = 0; c < o.clusters; ++c) {
    Rng rng(mix64(o.seed ^ 0x5bd1e995ULL, c));
    for (auto& v : centres[c]) v = rng.uniform(-1.0, 1.0);
  }
  lexicon::EmbeddingTable table(o.dim);
  for (const auto& w : words) {
    const auto& centre = centres[cluster_of(w, o)];
    Rng rng(mix64(o.seed, word_hash(w)));
    std::vector<float> v(o.dim);
    for (std::size_t k = 0; k < o.dim; ++k) {
      v[k] = static_cast<float>(centre[k] + o.spread * rng.uniform(-1.0, 1.0));
    }
    table.insert(w, std::move(v));
  }
  return table;
}

std::string norms_csv(const std::vector<std::string>& words, const LexiconOptions& o) {
  std::string out = "# ranges concreteness=100:700 imageability=100:700 familiarity=100:700 aoa=100:700\n";
  out += "word,concreteness,imageability,familiarity,aoa\n";
  const double denom = o.clusters > 1 ? static_cast<double>(o.clusters - 1) : 1.0;
  for (const auto& w : words) {
    const double base = static_cast<double>(cluster_of(w, o)) / denom;
    Rng rng(mix64(o.seed ^ 0x9e3779b9ULL, word_hash(w)));
    auto raw = [&](double centre) {
      const double v = std::clamp(centre + 0.15 * rng.uniform(-1.0, 1.0), 0.0, 1.0);
      return 100.0 + 600.0 * v;
    };
    const double conc = raw(base);
    const double imag = raw(0.8 * base + 0.1);
    const double fam = raw(0.5);
    const double aoa = raw(1.0 - base);
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%.2f,%.2f,%.2f,%.2f\n", conc, imag, fam, aoa);
    out += w + buf;
  }
  return out;
}

}  // namespace mc::synthetic
