#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mc/dialogue.hpp"
#include "mc/evalstats.hpp"

// Durable session store and request handling behind the HTTP/WebSocket API.
// Sessions are event-sourced: each accepted event is appended to
// sessions/<id>/events.jsonl and flushed before the dialogue advances.
namespace mc::service {

struct ServiceConfig {
  std::filesystem::path storage_dir = "mc-store";
  std::filesystem::path data_dir;  // abbreviations + tagger lexicons
  std::filesystem::path embeddings;
  lexicon::EmbeddingFormat embeddings_format = lexicon::EmbeddingFormat::text;
  std::filesystem::path norms;
  std::filesystem::path detector;
  std::filesystem::path scorer;
  std::filesystem::path templates;  // empty: built-in T1-T4
  std::filesystem::path utterances;
  std::filesystem::path response_patterns;
  metaphor::PipelineConfig pipeline;
  qgen::SelectionConfig selection;
  double bank_session_seconds = dialogue::kDefaultBudgetSeconds;
  double default_budget_seconds = dialogue::kDefaultBudgetSeconds;
  // 0 disables the silence timer.
  double silence_timeout_seconds = 30.0;
  std::string host = "127.0.0.1";
  unsigned short port = 8080;
};

// Relative paths resolve against `base_dir`.
ServiceConfig config_from_json(const Json& j, const std::filesystem::path& base_dir);
ServiceConfig load_config(const std::filesystem::path& path);
// MC_CONFIG, when set, wins over the path given on the command line.
std::filesystem::path resolve_config_path(const std::optional<std::filesystem::path>& cli_path);

enum class SessionStatus { ACTIVE, ENDED };
std::string_view to_string(SessionStatus s);

struct SessionRecord {
  std::string session_id;
  std::string doc_id;
  std::string bank_id;
  std::string created_at;
  double budget_seconds = 0.0;
  std::uint64_t seed = 0;
  SessionStatus status = SessionStatus::ACTIVE;
  std::string transcript_ref;
  std::optional<std::string> survey_ref;
};

Json to_json(const SessionRecord& r);

enum class BankStatus { PENDING, READY, FAILED };
std::string_view to_string(BankStatus s);

struct BankInfo {
  std::string bank_id;
  std::string doc_id;
  BankStatus status = BankStatus::PENDING;
  std::string error;
  std::shared_ptr<const qgen::QuestionBank> bank;
};

struct BankRequest {
  std::string text;
  std::string doc_id;
  std::string title;
  std::uint64_t seed = 0;
  std::optional<double> session_seconds;
};

struct PostResult {
  std::vector<std::string> utterances;
  std::vector<dialogue::Turn> turns;  // turns added by this event
  dialogue::Phase phase = dialogue::Phase::GREETING;
};

// Thrown by a fault hook to model a process dying at that point.
struct SimulatedCrash : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Seconds on the service's clock; injectable for tests.
using Clock = std::function<double()>;
Clock system_clock();

using TurnCallback = std::function<void(const std::string& session_id, const dialogue::Turn& turn)>;

class Service {
 public:
  // Fault points: "after_event_write" (event durable, not yet applied).
  using FaultHook = std::function<void(std::string_view point)>;

  explicit Service(ServiceConfig config, Clock clock = system_clock());
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return config_; }
  double now() const { return clock_(); }
  void set_fault_hook(FaultHook hook);

  // Starts an asynchronous ingest + score + select run. Throws
  // ValidationError on empty text and ConfigError when models are missing.
  std::string build_bank(const BankRequest& request);
  // Registers an already-built bank.
  std::string import_bank(const qgen::QuestionBank& bank);
  BankInfo bank_info(const std::string& bank_id) const;
  // Blocks until the bank leaves PENDING.
  BankInfo wait_for_bank(const std::string& bank_id) const;

  // Exactly one of bank_id / doc_id; doc_id picks the newest ready bank.
  SessionRecord create_session(const std::optional<std::string>& bank_id, const std::optional<std::string>& doc_id,
                               std::optional<double> budget_seconds, std::uint64_t seed);
  SessionRecord session_record(const std::string& session_id) const;
  std::vector<SessionRecord> sessions() const;

  PostResult post_event(const std::string& session_id, dialogue::EventKind kind, const std::string& text);
  PostResult post_utterance(const std::string& session_id, const std::string& text);
  dialogue::SessionTranscript transcript(const std::string& session_id) const;
  dialogue::DialogueState state(const std::string& session_id) const;
  std::vector<dialogue::UserEvent> event_log(const std::string& session_id) const;

  // Injects SILENCE_TIMEOUT into every session waiting on the user for at
  // least silence_timeout_seconds. Returns the sessions touched.
  std::vector<std::string> tick(double now);

  evalstats::SurveyResponse submit_survey(const std::string& session_id, const Json& payload);
  std::vector<evalstats::SurveyResponse> survey_responses() const;
  std::vector<evalstats::SurveyStats> summary() const;

  // Existing turns are delivered first, then new ones as they persist.
  std::uint64_t subscribe(const std::string& session_id, TurnCallback callback);
  void unsubscribe(std::uint64_t token);

 private:
  struct Session;
  struct Models;

  std::shared_ptr<Session> find_session(const std::string& session_id) const;
  std::shared_ptr<const Models> models();
  PostResult post_event_at(Session& s, dialogue::EventKind kind, const std::string& text, double at);
  PostResult apply_locked(Session& s, const dialogue::UserEvent& event);
  std::shared_ptr<Session> open_session(const SessionRecord& record, std::shared_ptr<const qgen::QuestionBank> bank);
  void recover_banks();
  void recover_sessions();
  void publish(const std::string& session_id, const std::vector<dialogue::Turn>& turns);
  std::string next_id(const char* prefix, std::uint64_t& counter);

  ServiceConfig config_;
  Clock clock_;
  FaultHook fault_hook_;
  dialogue::DialogueContext base_context_;
  // Loaded at startup when configured; sessions share its embeddings.
  std::shared_ptr<const lexicon::Lexicons> lexicons_;

  mutable std::mutex mu_;  // guards the maps and counters below
  mutable std::condition_variable bank_cv_;
  std::map<std::string, BankInfo> banks_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t bank_counter_ = 0;
  std::uint64_t session_counter_ = 0;
  std::mutex models_mu_;
  std::shared_ptr<const Models> models_;
  std::mutex survey_mu_;
  std::mutex index_mu_;
  std::vector<std::thread> workers_;

  mutable std::mutex sub_mu_;
  std::uint64_t sub_counter_ = 0;
  std::map<std::uint64_t, std::pair<std::string, TurnCallback>> subscribers_;
};

// Transport-neutral request/response used by the HTTP server and tests.
struct HttpRequest {
  std::string method;
  std::string target;  // path plus optional query
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

HttpResponse handle_request(Service& service, const HttpRequest& request);

// Error body {code, message} and status for an exception.
HttpResponse error_response(const std::exception& e);

// Blocks serving HTTP and WebSocket on config().host:port until stop().
class Server {
 public:
  Server(Service& service, unsigned threads = 2);
  ~Server();
  // Binds and starts serving in background threads; returns the bound port
  // (useful with port 0).
  unsigned short start(const std::string& host, unsigned short port);
  void stop();
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mc::service
