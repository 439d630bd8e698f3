#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mc/util.hpp"

// Raw book text to sentence-segmented, POS-tagged documents.
namespace mc::corpus {

enum class Pos { NOUN, VERB, ADJ, ADV, PRON, DET, ADP, CONJ, NUM, PUNCT, OTHER };

std::string_view to_string(Pos pos);
// Throws FormatError on an unknown tag name.
Pos pos_from_string(std::string_view name);
// NOUN, VERB, ADJ and ADV.
bool is_content(Pos pos);

struct Token {
  std::string surface;
  std::string lemma;
  Pos pos = Pos::OTHER;
  std::size_t char_start = 0;  // offsets into the owning sentence text
  std::size_t char_end = 0;

  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::size_t index = 0;
  std::string text;
  std::vector<Token> tokens;

  bool operator==(const Sentence&) const = default;
};

struct Document {
  std::string doc_id;
  std::string title;
  std::vector<Sentence> sentences;
  std::string source_sha256;

  bool operator==(const Document&) const = default;
};

// Lowercased surface with a guarded s/es/ed/ing strip (stem kept >= 3 chars).
std::string lemmatize(std::string_view surface);

// Body between the Gutenberg START/END marker lines, or the whole text when
// the markers are absent. Line endings normalized to '\n'.
std::string strip_gutenberg(std::string_view raw);

class AbbreviationList {
 public:
  AbbreviationList() = default;
  explicit AbbreviationList(std::unordered_set<std::string> lowered) : entries_(std::move(lowered)) {}

  // One abbreviation per line ("mr.", "dr."), '#' comments.
  static AbbreviationList load(const std::filesystem::path& path);
  // The shipped English list.
  static AbbreviationList defaults();

  void add(std::string_view abbreviation);
  // word includes its trailing period, e.g. "Mr.".
  bool contains(std::string_view word) const;

 private:
  std::unordered_set<std::string> entries_;
};

std::vector<Sentence> segment_sentences(std::string_view body, const AbbreviationList& abbreviations);
std::vector<Sentence> segment_sentences(std::string_view body);

// Whitespace split with leading/trailing punctuation peeled off. Tokens get
// pos = OTHER and a lemma.
std::vector<Token> tokenize(std::string_view sentence_text);

class Tagger {
 public:
  // Loads the closed-class and open-class `word<TAB>TAG` files. A missing
  // file is a ConfigError.
  static Tagger load(const std::filesystem::path& closed_class, const std::filesystem::path& open_class);
  // Loads closed_class.tsv and open_class.tsv from a data directory.
  static Tagger from_data_dir(const std::filesystem::path& dir);

  void add_closed(std::string_view word, Pos pos);
  void add_open(std::string_view word, Pos pos);

  Pos tag_word(std::string_view surface) const;
  void tag(std::vector<Token>& tokens) const;

 private:
  std::unordered_map<std::string, Pos> closed_;
  std::unordered_map<std::string, Pos> open_;
};

std::vector<Token> pos_tag(std::vector<Token> tokens, const Tagger& tagger);

// Everything ingest needs besides the text.
struct Resources {
  AbbreviationList abbreviations;
  Tagger tagger;

  static Resources from_data_dir(const std::filesystem::path& dir);
};

// Tokenizes and tags a single free-standing sentence.
Sentence analyze_sentence(std::string_view text, const Tagger& tagger, std::size_t index = 0);

Document ingest(std::string_view raw, std::string_view doc_id, std::string_view title, const Resources& resources);

Json to_json(const Token& token);
Json to_json(const Sentence& sentence);
Json to_json(const Document& doc);
Token token_from_json(const Json& j);
Sentence sentence_from_json(const Json& j);
Document document_from_json(const Json& j);

Document load_document(const std::filesystem::path& path);
void save_document(const Document& doc, const std::filesystem::path& path);

// Lexicon file reader shared by the tagger and other `word<TAB>TAG` data.
std::vector<std::pair<std::string, std::string>> read_tab_pairs(const std::filesystem::path& path);

}  // namespace mc::corpus
