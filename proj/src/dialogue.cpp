#include "mc/dialogue.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

#include "mc/error.hpp"

namespace mc::dialogue {

namespace {

constexpr std::array<std::string_view, 6> kPhaseNames{"GREETING",        "ASKING",  "AWAITING_RESPONSE",
                                                      "FOLLOW_UP_AWAIT", "CLOSING", "ENDED"};
constexpr std::array<std::string_view, 4> kEventNames{"SESSION_START", "UTTERANCE", "SILENCE_TIMEOUT", "QUIT"};
constexpr std::array<std::string_view, 4> kResponseNames{"SUBSTANTIVE", "SHORT", "DONT_KNOW", "REPEAT_REQUEST"};
constexpr std::array<std::string_view, 8> kCategories{"greeting", "acknowledgment", "followup",  "reframe",
                                                      "silence",  "skip",           "farewell", "survey_invite"};

template <typename E, std::size_t N>
E from_names(std::string_view s, const std::array<std::string_view, N>& names, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  throw FormatError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

std::string normalize_for_match(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    if (text.substr(i, 3) == "’") {
      out.push_back('\'');
      i += 3;
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
      ++i;
    }
  }
  return out;
}

std::size_t word_token_count(std::string_view text) {
  std::size_t n = 0;
  for (const auto& tok : corpus::tokenize(text)) {
    const bool word = std::any_of(tok.surface.begin(), tok.surface.end(), [](char c) {
      const auto u = static_cast<unsigned char>(c);
      return u >= 0x80 || std::isalnum(u);
    });
    if (word) ++n;
  }
  return n;
}

// Mutable working copy threaded through one advance step.
class Step {
 public:
  Step(const DialogueContext& ctx, const DialogueState& state, double at) : ctx_(ctx), st_(state), at_(at) {}

  DialogueState& state() { return st_; }
  AdvanceResult finish() { return AdvanceResult{std::move(st_), std::move(said_), std::move(path_)}; }

  void enter(Phase p) {
    st_.phase = p;
    path_.push_back(p);
  }

  void say(std::string text, std::optional<std::string> question_id = std::nullopt) {
    st_.turns.push_back(Turn{Speaker::AGENT, text, at_, std::move(question_id), std::nullopt});
    said_.push_back(std::move(text));
  }

  void say_from(std::string_view category) {
    const auto& options = ctx_.utterances.lines(category);
    const auto pick = mix64(st_.seed, st_.draws++) % options.size();
    say(options[pick]);
  }

  void log_user(const UserEvent& e) {
    st_.turns.push_back(Turn{Speaker::USER, e.text, at_, st_.current_question, e.kind});
  }

  double remaining() const { return st_.budget_seconds - (at_ - st_.started_at.value_or(at_)); }

  const qgen::QtAQuestion* current() const {
    return st_.current_question ? ctx_.bank->find(*st_.current_question) : nullptr;
  }

  void close() {
    enter(Phase::CLOSING);
    st_.current_question.reset();
    say_from("farewell");
    say_from("survey_invite");
    enter(Phase::ENDED);
  }

  // Selects among the bank questions not yet asked; closes when nothing fits.
  void ask_next() {
    enter(Phase::ASKING);
    std::vector<metaphor::ScoredPair> candidates;
    for (const auto& q : ctx_.bank->questions) {
      if (std::find(st_.asked.begin(), st_.asked.end(), q.question_id) == st_.asked.end()) {
        candidates.push_back(q.scored);
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
      return metaphor::chronological_less(a.pair, b.pair);
    });
    static const lexicon::EmbeddingTable kNoEmbeddings;
    const auto& embeddings = ctx_.embeddings != nullptr ? *ctx_.embeddings : kNoEmbeddings;
    const auto pick = qgen::select_next(candidates, st_.history, remaining(), ctx_.bank->config, embeddings);
    const qgen::QtAQuestion* q = pick ? ctx_.bank->find(qgen::question_id_for(pick->pair)) : nullptr;
    if (q == nullptr) {
      close();
      return;
    }
    st_.history.push_back(q->scored);
    st_.asked.push_back(q->question_id);
    st_.current_question = q->question_id;
    st_.followups_used_for_current = 0;
    st_.silence_prompts_for_current = 0;
    say(q->text, q->question_id);
    enter(Phase::AWAITING_RESPONSE);
  }

  void restate() {
    if (const auto* q = current()) say(q->text, q->question_id);
  }

  // Same pair through the template after the one the question used.
  void reframe() {
    say_from("reframe");
    if (const auto* q = current()) {
      const auto options = ctx_.templates.compatible(q->pair().pattern);
      std::uint64_t next = mix64(st_.seed, st_.draws++);
      for (std::size_t i = 0; i < options.size(); ++i) {
        if (options[i]->id == q->template_id) next = i + 1;
      }
      auto alt = qgen::generate_question(q->scored, next, ctx_.templates);
      say(alt.text, q->question_id);
    }
  }

 private:
  const DialogueContext& ctx_;
  DialogueState st_;
  double at_;
  std::vector<std::string> said_;
  std::vector<Phase> path_;
};

}  // namespace

std::string_view to_string(Phase p) { return kPhaseNames[static_cast<std::size_t>(p)]; }
std::string_view to_string(EventKind k) { return kEventNames[static_cast<std::size_t>(k)]; }
std::string_view to_string(Speaker s) { return s == Speaker::AGENT ? "AGENT" : "USER"; }
std::string_view to_string(ResponseKind r) { return kResponseNames[static_cast<std::size_t>(r)]; }
Phase phase_from_string(std::string_view s) { return from_names<Phase>(s, kPhaseNames, "phase"); }
EventKind event_kind_from_string(std::string_view s) { return from_names<EventKind>(s, kEventNames, "event kind"); }
Speaker speaker_from_string(std::string_view s) {
  if (s == "AGENT") return Speaker::AGENT;
  if (s == "USER") return Speaker::USER;
  throw FormatError("unknown speaker '" + std::string(s) + "'");
}

Json to_json(const UserEvent& e) {
  return Json{{"kind", std::string(to_string(e.kind))}, {"text", e.text}, {"at", e.at}};
}

UserEvent user_event_from_json(const Json& j) {
  UserEvent e;
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  e.text = j.value("text", std::string());
  e.at = j.value("at", 0.0);
  return e;
}

Json to_json(const Turn& t) {
  Json j{{"speaker", std::string(to_string(t.speaker))}, {"text", t.text}, {"at", t.at}};
  if (t.question_id) j["question_id"] = *t.question_id;
  if (t.event) j["event"] = std::string(to_string(*t.event));
  return j;
}

Turn turn_from_json(const Json& j) {
  Turn t;
  t.speaker = speaker_from_string(j.at("speaker").get<std::string>());
  t.text = j.at("text").get<std::string>();
  t.at = j.at("at").get<double>();
  if (j.contains("question_id")) t.question_id = j.at("question_id").get<std::string>();
  if (j.contains("event")) t.event = event_kind_from_string(j.at("event").get<std::string>());
  return t;
}

std::string to_jsonl(const SessionTranscript& t) {
  std::string out;
  for (const auto& turn : t.turns) out += to_json(turn).dump() + "\n";
  return out;
}

SessionTranscript transcript_from_jsonl(std::string session_id, std::string_view text) {
  SessionTranscript t;
  t.session_id = std::move(session_id);
  std::size_t lineno = 0;
  for (const auto& line : split(text, '\n')) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      t.turns.push_back(turn_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("transcript line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return t;
}

ResponsePatterns ResponsePatterns::load(const std::filesystem::path& path) {
  ResponsePatterns p;
  for (const auto& [category, pattern] : corpus::read_tab_pairs(path)) {
    if (category == "repeat") {
      p.add(ResponseKind::REPEAT_REQUEST, pattern);
    } else if (category == "dont_know") {
      p.add(ResponseKind::DONT_KNOW, pattern);
    } else {
      throw ConfigError(path.string() + ": unknown response category '" + category + "'");
    }
  }
  return p;
}

ResponsePatterns ResponsePatterns::defaults() {
  ResponsePatterns p;
  for (auto s : {"repeat", "say that again", "what?", "pardon", "come again", "one more time"}) {
    p.add(ResponseKind::REPEAT_REQUEST, s);
  }
  for (auto s : {"i don't know", "i dont know", "i do not know", "no idea", "not sure", "no clue", "dunno"}) {
    p.add(ResponseKind::DONT_KNOW, s);
  }
  return p;
}

void ResponsePatterns::add(ResponseKind kind, std::string_view pattern) {
  auto normalized = normalize_for_match(pattern);
  if (kind == ResponseKind::REPEAT_REQUEST) {
    repeat_.push_back(std::move(normalized));
  } else if (kind == ResponseKind::DONT_KNOW) {
    dont_know_.push_back(std::move(normalized));
  } else {
    throw ContractViolation("only repeat and don't-know patterns are configurable");
  }
}

ResponseKind ResponsePatterns::classify(std::string_view text) const {
  const auto t = normalize_for_match(text);
  auto any = [&](const std::vector<std::string>& ps) {
    return std::any_of(ps.begin(), ps.end(), [&](const std::string& p) { return t.find(p) != std::string::npos; });
  };
  if (any(repeat_)) return ResponseKind::REPEAT_REQUEST;
  if (any(dont_know_)) return ResponseKind::DONT_KNOW;
  if (word_token_count(text) < 4) return ResponseKind::SHORT;
  return ResponseKind::SUBSTANTIVE;
}

ResponseKind classify_response(std::string_view text, const ResponsePatterns& patterns) {
  if (trim(text).empty()) throw ContractViolation("classify_response: empty text");
  return patterns.classify(text);
}

ResponseKind classify_response(std::string_view text) {
  static const ResponsePatterns kDefaults = ResponsePatterns::defaults();
  return classify_response(text, kDefaults);
}

UtteranceBank UtteranceBank::load(const std::filesystem::path& path) {
  UtteranceBank bank;
  for (auto& [category, text] : corpus::read_tab_pairs(path)) {
    if (std::find(kCategories.begin(), kCategories.end(), category) == kCategories.end()) {
      throw ConfigError(path.string() + ": unknown utterance category '" + category + "'");
    }
    bank.add(category, text);
  }
  bank.require_complete();
  return bank;
}

UtteranceBank UtteranceBank::defaults() {
  UtteranceBank b;
  b.add("greeting", "Hi, I'm Grace! I've been reading the same book as you, and I'd love to talk about it.");
  b.add("greeting", "Hello! I'm Grace. Thanks for joining me to talk about the book today.");
  b.add("acknowledgment", "That's a really interesting way to look at it.");
  b.add("acknowledgment", "I hadn't thought of it like that. Thank you for sharing.");
  b.add("acknowledgment", "Good point. Let's keep going.");
  b.add("followup", "Could you tell me a little more about why you think that?");
  b.add("followup", "What makes you say that?");
  b.add("reframe", "That's okay, there's no wrong answer here. Let me ask it another way.");
  b.add("reframe", "No problem, it's a tricky passage. Here's another way to think about it.");
  b.add("silence", "Take your time. Here's the question again.");
  b.add("skip", "Let's try a different passage.");
  b.add("farewell", "Thank you so much for discussing the book with me today. I really enjoyed it!");
  b.add("farewell", "That's all the time we have. I had a wonderful time talking with you.");
  b.add("survey_invite", "Before you go, would you mind answering a few short questions about our conversation?");
  return b;
}

void UtteranceBank::add(std::string category, std::string text) { lines_[std::move(category)].push_back(std::move(text)); }

const std::vector<std::string>& UtteranceBank::lines(std::string_view category) const {
  const auto it = lines_.find(category);
  if (it == lines_.end() || it->second.empty()) {
    throw ConfigError("utterance bank has no '" + std::string(category) + "' lines");
  }
  return it->second;
}

void UtteranceBank::require_complete() const {
  for (auto c : kCategories) lines(c);
}

DialogueState new_session(const qgen::QuestionBank& bank, double budget_seconds, std::uint64_t seed,
                          std::string session_id, bool allow_empty_bank) {
  if (bank.questions.empty() && !allow_empty_bank) throw ContractViolation("question bank is empty");
  if (!(budget_seconds >= 0)) throw ContractViolation("budget must be non-negative");
  DialogueState s;
  s.session_id = std::move(session_id);
  s.budget_seconds = budget_seconds;
  s.seed = seed;
  return s;
}

AdvanceResult advance(const DialogueContext& ctx, const DialogueState& state, const UserEvent& event) {
  if (state.phase == Phase::ENDED) throw ContractViolation("advance on an ENDED session");
  if (event.kind == EventKind::UTTERANCE && trim(event.text).empty()) {
    throw ContractViolation("UTTERANCE events need non-empty text");
  }
  if (!ctx.bank) throw ContractViolation("dialogue context has no question bank");

  const double at = std::max(event.at, state.last_at);
  Step step(ctx, state, at);
  auto& st = step.state();
  st.last_at = at;
  if (!st.started_at) st.started_at = at;

  if (st.phase == Phase::GREETING) {
    // Any event opens the session; input before the greeting is not logged.
    step.say_from("greeting");
    if (event.kind == EventKind::QUIT) {
      step.close();
    } else {
      step.ask_next();
    }
    st.events_processed++;
    return step.finish();
  }

  step.log_user(event);
  st.events_processed++;

  if (event.kind == EventKind::QUIT || step.remaining() <= 0) {
    step.close();
    return step.finish();
  }

  switch (event.kind) {
    case EventKind::SESSION_START:
      // Already started; treat as a request to hear the question again.
      step.restate();
      break;
    case EventKind::SILENCE_TIMEOUT:
      if (st.silence_prompts_for_current == 0) {
        st.silence_prompts_for_current = 1;
        step.say_from("silence");
        step.restate();
      } else {
        step.say_from("skip");
        step.ask_next();
      }
      break;
    case EventKind::UTTERANCE: {
      const auto kind = classify_response(event.text, ctx.patterns);
      if (kind == ResponseKind::REPEAT_REQUEST) {
        step.restate();
      } else if (st.phase == Phase::AWAITING_RESPONSE && st.followups_used_for_current == 0 &&
                 kind == ResponseKind::SHORT) {
        st.followups_used_for_current = 1;
        step.say_from("followup");
        step.enter(Phase::FOLLOW_UP_AWAIT);
      } else if (st.phase == Phase::AWAITING_RESPONSE && st.followups_used_for_current == 0 &&
                 kind == ResponseKind::DONT_KNOW) {
        st.followups_used_for_current = 1;
        step.reframe();
        step.enter(Phase::FOLLOW_UP_AWAIT);
      } else {
        step.say_from("acknowledgment");
        step.ask_next();
      }
      break;
    }
    case EventKind::QUIT:
      break;
  }
  return step.finish();
}

SessionTranscript transcript(const DialogueState& state) { return SessionTranscript{state.session_id, state.turns}; }

DialogueState replay(const DialogueContext& ctx, const DialogueState& initial, const std::vector<UserEvent>& events) {
  DialogueState s = initial;
  for (const auto& e : events) {
    if (s.phase == Phase::ENDED) break;
    s = advance(ctx, s, e).state;
  }
  return s;
}

}  // namespace mc::dialogue
