#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mc/qgen.hpp"

// Budgeted, turn-based discussion over a question bank. The core is
// clock-free: every event carries its own timestamp (seconds).
namespace mc::dialogue {

enum class Phase { GREETING, ASKING, AWAITING_RESPONSE, FOLLOW_UP_AWAIT, CLOSING, ENDED };
enum class EventKind { SESSION_START, UTTERANCE, SILENCE_TIMEOUT, QUIT };
enum class Speaker { AGENT, USER };
enum class ResponseKind { SUBSTANTIVE, SHORT, DONT_KNOW, REPEAT_REQUEST };

std::string_view to_string(Phase p);
std::string_view to_string(EventKind k);
std::string_view to_string(Speaker s);
std::string_view to_string(ResponseKind r);
Phase phase_from_string(std::string_view s);
EventKind event_kind_from_string(std::string_view s);
Speaker speaker_from_string(std::string_view s);

struct UserEvent {
  EventKind kind = EventKind::UTTERANCE;
  std::string text;
  double at = 0.0;

  bool operator==(const UserEvent&) const = default;
};

Json to_json(const UserEvent& e);
UserEvent user_event_from_json(const Json& j);

struct Turn {
  Speaker speaker = Speaker::AGENT;
  std::string text;
  double at = 0.0;
  std::optional<std::string> question_id;
  // The event behind a user turn.
  std::optional<EventKind> event;

  bool operator==(const Turn&) const = default;
};

struct SessionTranscript {
  std::string session_id;
  std::vector<Turn> turns;

  bool operator==(const SessionTranscript&) const = default;
};

Json to_json(const Turn& t);
Turn turn_from_json(const Json& j);
// One turn per line.
std::string to_jsonl(const SessionTranscript& t);
SessionTranscript transcript_from_jsonl(std::string session_id, std::string_view text);

class ResponsePatterns {
 public:
  // `category<TAB>pattern` lines; categories `repeat` and `dont_know`.
  static ResponsePatterns load(const std::filesystem::path& path);
  static ResponsePatterns defaults();

  void add(ResponseKind kind, std::string_view pattern);
  ResponseKind classify(std::string_view text) const;

 private:
  std::vector<std::string> repeat_;
  std::vector<std::string> dont_know_;
};

// Repeat patterns, then don't-know patterns, then fewer than four word tokens
// is SHORT; anything else is SUBSTANTIVE. Case-insensitive.
ResponseKind classify_response(std::string_view text, const ResponsePatterns& patterns);
ResponseKind classify_response(std::string_view text);

class UtteranceBank {
 public:
  // `category<TAB>text` lines. Categories: greeting, acknowledgment,
  // followup, reframe, silence, skip, farewell, survey_invite.
  static UtteranceBank load(const std::filesystem::path& path);
  static UtteranceBank defaults();

  void add(std::string category, std::string text);
  // Throws ConfigError when the category is empty.
  const std::vector<std::string>& lines(std::string_view category) const;
  void require_complete() const;

 private:
  std::map<std::string, std::vector<std::string>, std::less<>> lines_;
};

struct DialogueContext {
  std::shared_ptr<const qgen::QuestionBank> bank;
  const lexicon::EmbeddingTable* embeddings = nullptr;
  qgen::TemplateBank templates = qgen::TemplateBank::defaults();
  UtteranceBank utterances = UtteranceBank::defaults();
  ResponsePatterns patterns = ResponsePatterns::defaults();
};

inline constexpr double kDefaultBudgetSeconds = 1800.0;

struct DialogueState {
  std::string session_id;
  Phase phase = Phase::GREETING;
  std::vector<metaphor::ScoredPair> history;
  std::vector<std::string> asked;
  std::optional<std::string> current_question;
  std::optional<double> started_at;
  double last_at = 0.0;
  double budget_seconds = kDefaultBudgetSeconds;
  int followups_used_for_current = 0;
  int silence_prompts_for_current = 0;
  std::uint64_t seed = 0;
  std::uint64_t draws = 0;
  std::size_t events_processed = 0;
  std::vector<Turn> turns;

  bool operator==(const DialogueState&) const = default;
};

// Throws ContractViolation on an empty bank unless allow_empty_bank.
DialogueState new_session(const qgen::QuestionBank& bank, double budget_seconds, std::uint64_t seed,
                          std::string session_id = "session", bool allow_empty_bank = false);

struct AdvanceResult {
  DialogueState state;
  std::vector<std::string> utterances;
  // Phases entered during this step, in order.
  std::vector<Phase> path;
};

// Throws ContractViolation when the session has ENDED or the event is
// malformed (an UTTERANCE with empty text).
AdvanceResult advance(const DialogueContext& ctx, const DialogueState& state, const UserEvent& event);

SessionTranscript transcript(const DialogueState& state);

// Re-runs an event log from a fresh session.
DialogueState replay(const DialogueContext& ctx, const DialogueState& initial, const std::vector<UserEvent>& events);

}  // namespace mc::dialogue
