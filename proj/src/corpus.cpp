#include "mc/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

#include "mc/error.hpp"

namespace mc::corpus {

namespace {

constexpr std::array<std::pair<Pos, std::string_view>, 11> kPosNames{{
    {Pos::NOUN, "NOUN"},
    {Pos::VERB, "VERB"},
    {Pos::ADJ, "ADJ"},
    {Pos::ADV, "ADV"},
    {Pos::PRON, "PRON"},
    {Pos::DET, "DET"},
    {Pos::ADP, "ADP"},
    {Pos::CONJ, "CONJ"},
    {Pos::NUM, "NUM"},
    {Pos::PUNCT, "PUNCT"},
    {Pos::OTHER, "OTHER"},
}};

// Multi-byte punctuation treated like ASCII punctuation by the tokenizer.
constexpr std::array<std::string_view, 12> kUnicodePunct{
    "“", "”", "‘", "’", "—", "–",
    "…", "«", "»", "¡", "¿", "‒"};

// Closing quotes/brackets that may follow a sentence terminator.
constexpr std::array<std::string_view, 7> kClosers{"\"", "'", ")", "]", "_", "”", "’"};
constexpr std::array<std::string_view, 6> kOpeners{"\"", "'", "(", "_", "“", "‘"};

std::size_t cp_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead & 0xE0) == 0xC0) return 2;
  if ((lead & 0xF0) == 0xE0) return 3;
  if ((lead & 0xF8) == 0xF0) return 4;
  return 1;
}

// Length of the punctuation code point starting at text[pos], or 0.
std::size_t punct_at(std::string_view text, std::size_t pos) {
  const auto c = static_cast<unsigned char>(text[pos]);
  if (c < 0x80) {
    return std::ispunct(c) ? 1 : 0;
  }
  for (auto p : kUnicodePunct) {
    if (text.substr(pos, p.size()) == p) {
      return p.size();
    }
  }
  return 0;
}

// Length of the punctuation code point ending at text[end-1], or 0.
std::size_t punct_before(std::string_view text, std::size_t end) {
  if (end == 0) return 0;
  const auto c = static_cast<unsigned char>(text[end - 1]);
  if (c < 0x80) {
    return std::ispunct(c) ? 1 : 0;
  }
  for (auto p : kUnicodePunct) {
    if (end >= p.size() && text.substr(end - p.size(), p.size()) == p) {
      return p.size();
    }
  }
  return 0;
}

bool starts_with_any(std::string_view text, std::size_t pos, const auto& options, std::size_t* matched) {
  for (auto o : options) {
    if (text.substr(pos, o.size()) == o) {
      *matched = o.size();
      return true;
    }
  }
  return false;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string normalize_apostrophes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (s.substr(i, 3) == "’" || s.substr(i, 3) == "‘") {
      out.push_back('\'');
      i += 3;
    } else {
      out.push_back(s[i]);
      ++i;
    }
  }
  return out;
}

class TokenBuilder {
 public:
  explicit TokenBuilder(std::string_view text) : text_(text) {}

  void chunk(std::size_t a, std::size_t b) {
    if (a >= b) return;
    // Leading punctuation, one token per run of identical code points.
    std::size_t head = a;
    while (head < b) {
      const auto len = punct_at(text_, head);
      if (len == 0) break;
      std::size_t run = head + len;
      while (run + len <= b && text_.substr(run, len) == text_.substr(head, len)) run += len;
      emit(head, run);
      head = run;
    }
    if (head >= b) return;
    // Trailing punctuation, collected back to front.
    std::vector<std::pair<std::size_t, std::size_t>> tail;
    std::size_t end = b;
    while (end > head) {
      const auto len = punct_before(text_, end);
      if (len == 0) break;
      std::size_t run = end - len;
      while (run >= head + len && text_.substr(run - len, len) == text_.substr(end - len, len)) run -= len;
      tail.emplace_back(run, end);
      end = run;
    }
    core(head, end);
    for (auto it = tail.rbegin(); it != tail.rend(); ++it) emit(it->first, it->second);
  }

  std::vector<Token> take() { return std::move(tokens_); }

 private:
  // Words keep internal apostrophes and single hyphens; dash runs split.
  void core(std::size_t a, std::size_t b) {
    if (a >= b) return;
    const auto word = text_.substr(a, b - a);
    std::size_t dash = word.find("--");
    std::size_t dash_len = 2;
    const std::size_t em = word.find("—");
    if (em != std::string_view::npos && (dash == std::string_view::npos || em < dash)) {
      dash = em;
      dash_len = 3;
    }
    if (dash == std::string_view::npos || dash == 0) {
      emit(a, b);
      return;
    }
    std::size_t run_end = dash + dash_len;
    while (run_end < word.size() && (word[run_end] == '-' || word.substr(run_end, 3) == "—")) {
      run_end += word[run_end] == '-' ? 1 : 3;
    }
    chunk(a, a + dash);
    emit(a + dash, a + run_end);
    chunk(a + run_end, b);
  }

  void emit(std::size_t a, std::size_t b) {
    Token t;
    t.surface = std::string(text_.substr(a, b - a));
    t.lemma = lemmatize(t.surface);
    t.pos = Pos::OTHER;
    t.char_start = a;
    t.char_end = b;
    tokens_.push_back(std::move(t));
  }

  std::string_view text_;
  std::vector<Token> tokens_;
};

bool all_punct(std::string_view s) {
  if (s.empty()) return false;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto len = punct_at(s, i);
    if (len == 0) return false;
    i += len;
  }
  return true;
}

bool is_number(std::string_view s) {
  bool digit = false;
  for (char c : s) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digit = true;
    } else if (c != ',' && c != '.' && c != '-') {
      return false;
    }
  }
  return digit;
}

std::string strip_possessive(std::string_view lw) {
  if (ends_with(lw, "'s") && lw.size() > 2) return std::string(lw.substr(0, lw.size() - 2));
  return std::string(lw);
}

// Collapses whitespace runs to single spaces and trims.
std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

bool is_start_marker(std::string_view line) {
  const auto t = trim(line);
  if (t.rfind("***", 0) != 0) return false;
  const auto lower = to_lower_ascii(t);
  return lower.find("start of") != std::string::npos && ends_with(t, "***");
}

bool is_end_marker(std::string_view line) {
  const auto t = trim(line);
  if (t.rfind("***", 0) != 0) return false;
  const auto lower = to_lower_ascii(t);
  return lower.find("end of") != std::string::npos && ends_with(t, "***");
}

void segment_paragraph(std::string_view para, const AbbreviationList& abbreviations,
                       std::vector<Sentence>& out) {
  const std::string text = collapse_whitespace(para);
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c != '.' && c != '?' && c != '!') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && (text[j] == '.' || text[j] == '?' || text[j] == '!')) ++j;
    std::size_t m = 0;
    while (j < text.size() && starts_with_any(text, j, kClosers, &m)) j += m;
    if (j >= text.size() || text[j] != ' ') {
      i = j;
      continue;
    }
    const std::size_t next = j + 1;
    const bool capital = next < text.size() && std::isupper(static_cast<unsigned char>(text[next]));
    const bool quote = next < text.size() && starts_with_any(text, next, kOpeners, &m);
    if (!capital && !quote) {
      i = j;
      continue;
    }
    if (c == '.' && j == i + 1) {
      std::size_t w = i;
      while (w > start && text[w - 1] != ' ') --w;
      std::string_view word(text.data() + w, i + 1 - w);
      while (word.size() > 1 && punct_at(word, 0) != 0) word.remove_prefix(punct_at(word, 0));
      if (abbreviations.contains(word)) {
        i = j;
        continue;
      }
    }
    auto sentence = trim(std::string_view(text).substr(start, j - start));
    if (!sentence.empty()) {
      out.push_back(Sentence{out.size(), std::move(sentence), {}});
    }
    start = next;
    i = next;
  }
  auto rest = trim(std::string_view(text).substr(std::min(start, text.size())));
  if (!rest.empty()) {
    out.push_back(Sentence{out.size(), std::move(rest), {}});
  }
}

}  // namespace

std::string_view to_string(Pos pos) {
  for (const auto& [p, name] : kPosNames) {
    if (p == pos) return name;
  }
  return "OTHER";
}

Pos pos_from_string(std::string_view name) {
  for (const auto& [p, n] : kPosNames) {
    if (n == name) return p;
  }
  throw FormatError("unknown POS tag '" + std::string(name) + "'");
}

bool is_content(Pos pos) {
  return pos == Pos::NOUN || pos == Pos::VERB || pos == Pos::ADJ || pos == Pos::ADV;
}

std::string lemmatize(std::string_view surface) {
  std::string w = strip_possessive(to_lower_ascii(normalize_apostrophes(surface)));
  auto strip = [&](std::string_view suffix) {
    if (ends_with(w, suffix) && w.size() - suffix.size() >= 3) {
      w.resize(w.size() - suffix.size());
      return true;
    }
    return false;
  };
  if (strip("ing") || strip("ed")) return w;
  if (ends_with(w, "es") && w.size() >= 5) {
    const std::string_view stem(w.data(), w.size() - 2);
    if (ends_with(stem, "s") || ends_with(stem, "x") || ends_with(stem, "z") || ends_with(stem, "ch") ||
        ends_with(stem, "sh")) {
      w.resize(w.size() - 2);
      return w;
    }
  }
  if (ends_with(w, "s") && !ends_with(w, "ss")) strip("s");
  return w;
}

std::string strip_gutenberg(std::string_view raw) {
  if (!is_valid_utf8(raw)) {
    try {
      validate_utf8(raw);
    } catch (const FormatError& e) {
      throw IngestError(e.what());
    }
  }
  std::string text;
  text.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '\r') {
      text.push_back('\n');
      if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
    } else {
      text.push_back(raw[i]);
    }
  }

  std::size_t body_begin = std::string::npos;
  std::size_t body_end = std::string::npos;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    const std::size_t line_end = eol == std::string::npos ? text.size() : eol;
    const std::string_view line(text.data() + pos, line_end - pos);
    const std::size_t next = eol == std::string::npos ? text.size() : eol + 1;
    if (body_begin == std::string::npos) {
      if (is_start_marker(line)) body_begin = next;
    } else if (is_end_marker(line)) {
      body_end = pos;
      break;
    }
    pos = next;
  }
  if (body_begin == std::string::npos) return text;
  if (body_end == std::string::npos) body_end = text.size();
  return text.substr(body_begin, body_end - body_begin);
}

AbbreviationList AbbreviationList::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open abbreviation list " + path.string());
  AbbreviationList list;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    list.add(t);
  }
  return list;
}

AbbreviationList AbbreviationList::defaults() {
  AbbreviationList list;
  for (auto a : {"mr.", "mrs.", "ms.", "dr.", "st.", "messrs.", "mme.", "mlle.", "rev.", "col.", "capt.",
                 "gen.", "lt.", "sr.", "jr.", "prof.", "esq.", "etc.", "vs.", "viz.", "i.e.", "e.g.", "no.",
                 "vol.", "ch.", "p.", "pp.", "mt.", "ft.", "oz.", "lb."}) {
    list.add(a);
  }
  return list;
}

void AbbreviationList::add(std::string_view abbreviation) {
  auto lowered = to_lower_ascii(abbreviation);
  if (!lowered.empty() && lowered.back() != '.') lowered.push_back('.');
  entries_.insert(std::move(lowered));
}

bool AbbreviationList::contains(std::string_view word) const { return entries_.count(to_lower_ascii(word)) > 0; }

std::vector<Sentence> segment_sentences(std::string_view body, const AbbreviationList& abbreviations) {
  std::vector<Sentence> out;
  // Paragraphs are separated by lines holding only whitespace.
  std::size_t para_start = 0;
  std::size_t pos = 0;
  auto flush = [&](std::size_t end) {
    if (end > para_start) segment_paragraph(body.substr(para_start, end - para_start), abbreviations, out);
  };
  while (pos < body.size()) {
    std::size_t eol = body.find('\n', pos);
    const std::size_t line_end = eol == std::string_view::npos ? body.size() : eol;
    const auto line = body.substr(pos, line_end - pos);
    const bool blank = std::all_of(line.begin(), line.end(), is_space);
    const std::size_t next = eol == std::string_view::npos ? body.size() : eol + 1;
    if (blank) {
      flush(pos);
      para_start = next;
    }
    pos = next;
  }
  flush(body.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].index = i;
  return out;
}

std::vector<Sentence> segment_sentences(std::string_view body) {
  static const AbbreviationList kDefaults = AbbreviationList::defaults();
  return segment_sentences(body, kDefaults);
}

std::vector<Token> tokenize(std::string_view sentence_text) {
  TokenBuilder builder(sentence_text);
  std::size_t i = 0;
  while (i < sentence_text.size()) {
    while (i < sentence_text.size() && is_space(sentence_text[i])) ++i;
    std::size_t j = i;
    while (j < sentence_text.size() && !is_space(sentence_text[j])) {
      j += cp_length(static_cast<unsigned char>(sentence_text[j]));
    }
    j = std::min(j, sentence_text.size());
    builder.chunk(i, j);
    i = j;
  }
  return builder.take();
}

Tagger Tagger::load(const std::filesystem::path& closed_class, const std::filesystem::path& open_class) {
  Tagger tagger;
  for (const auto& [word, tag] : read_tab_pairs(closed_class)) tagger.add_closed(word, pos_from_string(tag));
  for (const auto& [word, tag] : read_tab_pairs(open_class)) tagger.add_open(word, pos_from_string(tag));
  return tagger;
}

Tagger Tagger::from_data_dir(const std::filesystem::path& dir) {
  return load(dir / "closed_class.tsv", dir / "open_class.tsv");
}

void Tagger::add_closed(std::string_view word, Pos pos) { closed_[to_lower_ascii(word)] = pos; }
void Tagger::add_open(std::string_view word, Pos pos) { open_[to_lower_ascii(word)] = pos; }

Pos Tagger::tag_word(std::string_view surface) const {
  if (all_punct(surface)) return Pos::PUNCT;
  if (is_number(surface)) return Pos::NUM;
  const std::string lw = to_lower_ascii(normalize_apostrophes(surface));
  if (auto it = closed_.find(lw); it != closed_.end()) return it->second;
  if (auto it = open_.find(lw); it != open_.end()) return it->second;
  const std::string bare = strip_possessive(lw);
  if (bare != lw) {
    if (auto it = closed_.find(bare); it != closed_.end()) return it->second;
    if (auto it = open_.find(bare); it != open_.end()) return it->second;
  }
  if (auto it = open_.find(lemmatize(bare)); it != open_.end()) return it->second;
  auto suffix = [&](std::string_view s) { return ends_with(bare, s) && bare.size() >= s.size() + 3; };
  if (suffix("ly")) return Pos::ADV;
  if (suffix("ed") || suffix("ing")) return Pos::VERB;
  if (suffix("ous") || suffix("ful") || suffix("ive")) return Pos::ADJ;
  return Pos::NOUN;
}

void Tagger::tag(std::vector<Token>& tokens) const {
  for (auto& t : tokens) t.pos = tag_word(t.surface);
}

std::vector<Token> pos_tag(std::vector<Token> tokens, const Tagger& tagger) {
  tagger.tag(tokens);
  return tokens;
}

Resources Resources::from_data_dir(const std::filesystem::path& dir) {
  Resources r;
  r.abbreviations = AbbreviationList::load(dir / "abbreviations.txt");
  r.tagger = Tagger::from_data_dir(dir);
  return r;
}

Sentence analyze_sentence(std::string_view text, const Tagger& tagger, std::size_t index) {
  Sentence s;
  s.index = index;
  s.text = std::string(text);
  s.tokens = pos_tag(tokenize(s.text), tagger);
  return s;
}

Document ingest(std::string_view raw, std::string_view doc_id, std::string_view title, const Resources& resources) {
  if (doc_id.empty()) throw IngestError("doc_id must be non-empty");
  Document doc;
  doc.doc_id = std::string(doc_id);
  doc.title = std::string(title);
  doc.source_sha256 = sha256_hex(raw);
  const auto body = strip_gutenberg(raw);
  doc.sentences = segment_sentences(body, resources.abbreviations);
  for (auto& s : doc.sentences) s.tokens = pos_tag(tokenize(s.text), resources.tagger);
  return doc;
}

Json to_json(const Token& token) {
  return Json{{"surface", token.surface},
              {"lemma", token.lemma},
              {"pos", std::string(to_string(token.pos))},
              {"char_start", token.char_start},
              {"char_end", token.char_end}};
}

Json to_json(const Sentence& sentence) {
  Json tokens = Json::array();
  for (const auto& t : sentence.tokens) tokens.push_back(to_json(t));
  return Json{{"index", sentence.index}, {"text", sentence.text}, {"tokens", std::move(tokens)}};
}

Json to_json(const Document& doc) {
  Json sentences = Json::array();
  for (const auto& s : doc.sentences) sentences.push_back(to_json(s));
  return Json{{"doc_id", doc.doc_id},
              {"title", doc.title},
              {"source_sha256", doc.source_sha256},
              {"sentences", std::move(sentences)}};
}

Token token_from_json(const Json& j) {
  Token t;
  t.surface = j.at("surface").get<std::string>();
  t.lemma = j.at("lemma").get<std::string>();
  t.pos = pos_from_string(j.at("pos").get<std::string>());
  t.char_start = j.at("char_start").get<std::size_t>();
  t.char_end = j.at("char_end").get<std::size_t>();
  return t;
}

Sentence sentence_from_json(const Json& j) {
  Sentence s;
  s.index = j.at("index").get<std::size_t>();
  s.text = j.at("text").get<std::string>();
  for (const auto& t : j.at("tokens")) s.tokens.push_back(token_from_json(t));
  return s;
}

Document document_from_json(const Json& j) {
  try {
    Document d;
    d.doc_id = j.at("doc_id").get<std::string>();
    d.title = j.at("title").get<std::string>();
    d.source_sha256 = j.at("source_sha256").get<std::string>();
    for (const auto& s : j.at("sentences")) d.sentences.push_back(sentence_from_json(s));
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid document JSON: ") + e.what());
  }
}

Document load_document(const std::filesystem::path& path) {
  try {
    return document_from_json(Json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_document(const Document& doc, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(doc).dump(1) + "\n");
}

std::vector<std::pair<std::string, std::string>> read_tab_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected word<TAB>value");
    }
    out.emplace_back(trim(line.substr(0, tab)), trim(line.substr(tab + 1)));
  }
  return out;
}

}  // namespace mc::corpus
