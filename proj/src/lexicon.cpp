#include "mc/lexicon.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "mc/error.hpp"

namespace mc::lexicon {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "float must be IEEE-754 binary32");

bool parse_double(std::string_view s, double& out) {
  s = std::string_view(s.data(), s.size());
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::pair<std::size_t, std::size_t> parse_header(std::string_view line, const std::string& where) {
  const auto fields = split_ws(line);
  std::size_t count = 0;
  std::size_t dim = 0;
  auto parse_size = [](std::string_view s, std::size_t& v) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && ptr == s.data() + s.size();
  };
  if (fields.size() != 2 || !parse_size(fields[0], count) || !parse_size(fields[1], dim) || dim == 0) {
    throw FormatError(where + ": header must be `vocab_count dim` with dim > 0");
  }
  return {count, dim};
}

EmbeddingTable load_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embeddings " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ":1: missing header");
  const auto [count, dim] = parse_header(line, path.string() + ":1");
  EmbeddingTable table(dim);
  std::size_t lineno = 1;
  std::size_t loaded = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != dim + 1) {
      throw FormatError(where + ": expected " + std::to_string(dim) + " values, found " +
                        std::to_string(fields.size() - 1));
    }
    std::vector<float> values(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      double v = 0;
      if (!parse_double(fields[k + 1], v)) throw FormatError(where + ": non-numeric value");
      values[k] = static_cast<float>(v);
    }
    table.insert(std::string(fields[0]), std::move(values));
    ++loaded;
  }
  if (loaded != count) {
    throw FormatError(path.string() + ": header declares " + std::to_string(count) + " entries, found " +
                      std::to_string(loaded));
  }
  return table;
}

EmbeddingTable load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open embeddings " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto eol = bytes.find('\n');
  if (eol == std::string::npos) throw FormatError(path.string() + ": offset 0: missing header line");
  const auto [count, dim] = parse_header(std::string_view(bytes).substr(0, eol), path.string() + ": offset 0");
  EmbeddingTable table(dim);
  std::size_t off = eol + 1;
  for (std::size_t e = 0; e < count; ++e) {
    // Some writers put a newline after each vector.
    while (off < bytes.size() && bytes[off] == '\n') ++off;
    const auto space = bytes.find(' ', off);
    if (space == std::string::npos || space == off) {
      throw FormatError(path.string() + ": offset " + std::to_string(off) + ": truncated entry " +
                        std::to_string(e) + " (word)");
    }
    std::string word = bytes.substr(off, space - off);
    off = space + 1;
    if (off + dim * 4 > bytes.size()) {
      throw FormatError(path.string() + ": offset " + std::to_string(off) + ": truncated entry " +
                        std::to_string(e) + " (vector)");
    }
    std::vector<float> values(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) {
        bits = (bits << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(b)]);
      }
      values[k] = std::bit_cast<float>(bits);
      off += 4;
    }
    table.insert(std::move(word), std::move(values));
  }
  return table;
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ContractViolation("embedding dim must be positive");
}

void EmbeddingTable::insert(std::string word, std::vector<float> values) {
  if (values.size() != dim_) throw ContractViolation("embedding vector length does not match table dim");
  auto [it, inserted] = entries_.insert_or_assign(std::move(word), std::move(values));
  if (!inserted) ++duplicates_;
}

std::optional<std::span<const float>> EmbeddingTable::vector(std::string_view word) const {
  if (auto it = entries_.find(std::string(word)); it != entries_.end()) return std::span<const float>(it->second);
  const auto lower = to_lower_ascii(word);
  if (auto it = entries_.find(lower); it != entries_.end()) return std::span<const float>(it->second);
  return std::nullopt;
}

std::vector<std::string> EmbeddingTable::sorted_words() const {
  std::vector<std::string> words;
  words.reserve(entries_.size());
  for (const auto& [w, v] : entries_) words.push_back(w);
  std::sort(words.begin(), words.end());
  return words;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  return format == EmbeddingFormat::text ? load_text(path) : load_binary(path);
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path, EmbeddingFormat format) {
  std::string out = std::to_string(table.size()) + " " + std::to_string(table.dim()) + "\n";
  for (const auto& word : table.sorted_words()) {
    const auto& values = table.entries().at(word);
    out += word;
    if (format == EmbeddingFormat::text) {
      char buf[64];
      for (float v : values) {
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out.push_back(' ');
        out.append(buf, ptr);
      }
      out.push_back('\n');
    } else {
      out.push_back(' ');
      for (float v : values) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFU));
      }
    }
  }
  write_file_atomic(path, out);
}

namespace {

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ContractViolation("cosine: vector lengths differ");
  double dot = 0;
  double na = 0;
  double nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (na == 0 || nb == 0) return 0.0;
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace

double cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }
double cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }

void NormTable::insert(std::string word, NormRecord record) {
  auto [it, inserted] = entries_.insert_or_assign(to_lower_ascii(word), record);
  if (!inserted) ++duplicates_;
}

std::optional<NormRecord> NormTable::lookup(std::string_view word) const {
  if (auto it = entries_.find(to_lower_ascii(word)); it != entries_.end()) return it->second;
  return std::nullopt;
}

NormTable load_norms(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open norms " + path.string());
  std::array<std::optional<std::pair<double, double>>, kNormCount> declared;
  std::array<int, kNormCount> column{-1, -1, -1, -1};
  int word_column = -1;
  bool have_header = false;
  struct Row {
    std::string word;
    NormRecord raw;
    std::size_t lineno;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = path.string() + ": row " + std::to_string(lineno);
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      std::istringstream ss(t.substr(1));
      std::string keyword;
      ss >> keyword;
      if (keyword != "ranges" && keyword != "range") continue;
      std::string spec;
      while (ss >> spec) {
        const auto eq = spec.find('=');
        const auto colon = spec.find(':', eq == std::string::npos ? 0 : eq);
        double lo = 0;
        double hi = 0;
        if (eq == std::string::npos || colon == std::string::npos ||
            !parse_double(std::string_view(spec).substr(eq + 1, colon - eq - 1), lo) ||
            !parse_double(std::string_view(spec).substr(colon + 1), hi) || !(hi > lo)) {
          throw FormatError(where + ": bad range declaration '" + spec + "'");
        }
        const auto name = spec.substr(0, eq);
        const auto it = std::find(kNormNames.begin(), kNormNames.end(), name);
        if (it == kNormNames.end()) throw FormatError(where + ": unknown norm '" + name + "' in range declaration");
        declared[static_cast<std::size_t>(it - kNormNames.begin())] = std::make_pair(lo, hi);
      }
      continue;
    }
    const auto cells = split(t, ',');
    if (!have_header) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto name = to_lower_ascii(trim(cells[c]));
        if (name == "word") word_column = static_cast<int>(c);
        for (std::size_t k = 0; k < kNormCount; ++k) {
          if (name == kNormNames[k]) column[k] = static_cast<int>(c);
        }
      }
      if (word_column < 0) throw FormatError(where + ": missing column 'word'");
      for (std::size_t k = 0; k < kNormCount; ++k) {
        if (column[k] < 0) throw FormatError(where + ": missing column '" + std::string(kNormNames[k]) + "'");
      }
      have_header = true;
      continue;
    }
    Row row;
    row.lineno = lineno;
    const auto need = static_cast<std::size_t>(std::max({word_column, column[0], column[1], column[2], column[3]}));
    if (cells.size() <= need) throw FormatError(where + ": missing cells");
    row.word = trim(cells[static_cast<std::size_t>(word_column)]);
    if (row.word.empty()) throw FormatError(where + ": empty word");
    for (std::size_t k = 0; k < kNormCount; ++k) {
      if (!parse_double(cells[static_cast<std::size_t>(column[k])], row.raw[k])) {
        throw FormatError(where + ": non-numeric " + std::string(kNormNames[k]) + " cell");
      }
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw FormatError(path.string() + ": missing header row");

  std::array<std::pair<double, double>, kNormCount> range;
  for (std::size_t k = 0; k < kNormCount; ++k) {
    if (declared[k]) {
      range[k] = *declared[k];
      continue;
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& r : rows) {
      lo = std::min(lo, r.raw[k]);
      hi = std::max(hi, r.raw[k]);
    }
    range[k] = {lo, hi};
  }

  NormTable table;
  for (const auto& r : rows) {
    NormRecord rec{};
    for (std::size_t k = 0; k < kNormCount; ++k) {
      const auto [lo, hi] = range[k];
      if (r.raw[k] < lo || r.raw[k] > hi) {
        throw FormatError(path.string() + ": row " + std::to_string(r.lineno) + ": " + std::string(kNormNames[k]) +
                          " outside declared range");
      }
      // A single observed value carries no spread; park it at the midpoint.
      rec[k] = hi > lo ? (r.raw[k] - lo) / (hi - lo) : 0.5;
    }
    table.insert(r.word, rec);
  }
  return table;
}

std::size_t layout_length(std::string_view schema_id, std::size_t embedding_dim) {
  if (schema_id == kSentenceSchema) return embedding_dim + 14;
  if (schema_id == kPairSchema) return 2 * embedding_dim + 19;
  throw ContractViolation("unknown feature schema '" + std::string(schema_id) + "'");
}

std::optional<std::span<const float>> word_vector(const EmbeddingTable& table, const corpus::Token& token) {
  if (table.dim() == 0) return std::nullopt;
  if (auto v = table.vector(token.surface)) return v;
  return table.vector(token.lemma);
}

std::optional<NormRecord> word_norms(const NormTable& norms, const corpus::Token& token) {
  if (auto n = norms.lookup(token.surface)) return n;
  return norms.lookup(token.lemma);
}

FeatureVector sentence_features(const corpus::Sentence& sentence, const Lexicons& lexicons) {
  const std::size_t dim = lexicons.embeddings.dim();
  FeatureVector fv;
  fv.schema_id = std::string(kSentenceSchema);
  fv.values.assign(dim + 14, 0.0);

  std::size_t content = 0;
  std::size_t emb_hits = 0;
  std::size_t norm_hits = 0;
  std::array<double, kNormCount> sum{};
  std::array<double, kNormCount> mx{};
  std::array<double, kNormCount> mn{};
  mx.fill(-std::numeric_limits<double>::infinity());
  mn.fill(std::numeric_limits<double>::infinity());

  for (const auto& tok : sentence.tokens) {
    if (!corpus::is_content(tok.pos)) continue;
    ++content;
    if (auto v = word_vector(lexicons.embeddings, tok)) {
      ++emb_hits;
      for (std::size_t k = 0; k < dim; ++k) fv.values[k] += (*v)[k];
    }
    if (auto n = word_norms(lexicons.norms, tok)) {
      ++norm_hits;
      for (std::size_t k = 0; k < kNormCount; ++k) {
        sum[k] += (*n)[k];
        mx[k] = std::max(mx[k], (*n)[k]);
        mn[k] = std::min(mn[k], (*n)[k]);
      }
    }
  }
  if (emb_hits > 0) {
    for (std::size_t k = 0; k < dim; ++k) fv.values[k] /= static_cast<double>(emb_hits);
  }
  for (std::size_t k = 0; k < kNormCount; ++k) {
    const std::size_t base = dim + 3 * k;
    if (norm_hits == 0) {
      fv.values[base] = fv.values[base + 1] = fv.values[base + 2] = 0.5;
    } else {
      fv.values[base] = sum[k] / static_cast<double>(norm_hits);
      fv.values[base + 1] = mx[k];
      fv.values[base + 2] = mn[k];
    }
  }
  if (content > 0) {
    fv.values[dim + 12] = static_cast<double>(emb_hits) / static_cast<double>(content);
    fv.values[dim + 13] = static_cast<double>(norm_hits) / static_cast<double>(content);
  }
  return fv;
}

FeatureVector pair_features(const PairWords& pair, const Lexicons& lexicons) {
  const std::size_t dim = lexicons.embeddings.dim();
  FeatureVector fv;
  fv.schema_id = std::string(kPairSchema);
  fv.values.assign(2 * dim + 19, 0.0);

  const auto v1 = word_vector(lexicons.embeddings, pair.w1);
  const auto v2 = word_vector(lexicons.embeddings, pair.w2);
  if (v1) std::copy(v1->begin(), v1->end(), fv.values.begin());
  if (v2) std::copy(v2->begin(), v2->end(), fv.values.begin() + static_cast<std::ptrdiff_t>(dim));
  std::size_t at = 2 * dim;
  fv.values[at++] = (v1 && v2) ? cosine(*v1, *v2) : 0.0;

  NormRecord fill{};
  fill.fill(0.5);
  const NormRecord n1 = word_norms(lexicons.norms, pair.w1).value_or(fill);
  const NormRecord n2 = word_norms(lexicons.norms, pair.w2).value_or(fill);
  for (double v : n1) fv.values[at++] = v;
  for (double v : n2) fv.values[at++] = v;
  for (std::size_t k = 0; k < kNormCount; ++k) fv.values[at++] = std::abs(n1[k] - n2[k]);
  if (pair.pattern_index) {
    if (*pair.pattern_index >= kPatternCount) throw ContractViolation("pattern index out of range");
    fv.values[at + *pair.pattern_index] = 1.0;
  }
  return fv;
}

}  // namespace mc::lexicon
