#include "mc/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "mc/error.hpp"

namespace mc::service {

namespace fs = std::filesystem;
using dialogue::EventKind;
using dialogue::Phase;

namespace {

fs::path resolve(const fs::path& base, const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  fs::path p = j.at(key).get<std::string>();
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

// Appends one line and fsyncs before returning.
void append_line_durable(const fs::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error("cannot open " + path.string() + " for append");
  const std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(fd, data.data() + off, data.size() - off);
    if (n <= 0) {
      ::close(fd);
      throw Error("append failed for " + path.string());
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw Error("fsync failed for " + path.string());
  }
  ::close(fd);
}

// Complete JSON lines of an append-only log. A torn final line (no trailing
// newline, or unparseable) is dropped and the file truncated back to the last
// complete record.
std::vector<Json> read_log(const fs::path& path) {
  std::vector<Json> out;
  if (!fs::exists(path)) return out;
  const std::string text = read_file(path);
  std::size_t pos = 0;
  std::size_t good_end = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) break;
    const std::string_view line(text.data() + pos, nl - pos);
    if (!trim(line).empty()) {
      try {
        out.push_back(Json::parse(line));
      } catch (const nlohmann::json::exception&) {
        if (text.find('\n', nl + 1) != std::string::npos) {
          throw FormatError("corrupt record in " + path.string() + " at byte " + std::to_string(pos));
        }
        break;
      }
    }
    pos = nl + 1;
    good_end = pos;
  }
  if (good_end < text.size()) fs::resize_file(path, good_end);
  return out;
}

std::string iso_utc(double seconds) {
  const auto t = static_cast<std::time_t>(seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

SessionRecord record_from_json(const Json& j) {
  SessionRecord r;
  r.session_id = j.at("session_id").get<std::string>();
  r.doc_id = j.value("doc_id", std::string());
  r.bank_id = j.at("bank_id").get<std::string>();
  r.created_at = j.value("created_at", std::string());
  r.budget_seconds = j.at("budget_seconds").get<double>();
  r.seed = j.value("seed", std::uint64_t{0});
  return r;
}

Json bank_file_json(const BankInfo& info) {
  Json j{{"bank_id", info.bank_id},
         {"doc_id", info.doc_id},
         {"status", std::string(to_string(info.status))},
         {"error", info.error}};
  if (info.bank) j["bank"] = qgen::to_json(*info.bank);
  return j;
}

std::uint64_t id_number(const std::string& id) {
  if (id.size() < 2) return 0;
  try {
    return std::stoull(id.substr(1));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

ServiceConfig config_from_json(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("service config must be a JSON object");
  ServiceConfig c;
  try {
    if (j.contains("storage_dir")) c.storage_dir = resolve(base_dir, j, "storage_dir");
    c.data_dir = resolve(base_dir, j, "data_dir");
    c.embeddings = resolve(base_dir, j, "embeddings");
    const auto fmt = j.value("embeddings_format", std::string("text"));
    if (fmt == "text") {
      c.embeddings_format = lexicon::EmbeddingFormat::text;
    } else if (fmt == "binary") {
      c.embeddings_format = lexicon::EmbeddingFormat::binary;
    } else {
      throw ConfigError("embeddings_format must be text or binary");
    }
    c.norms = resolve(base_dir, j, "norms");
    c.detector = resolve(base_dir, j, "detector");
    c.scorer = resolve(base_dir, j, "scorer");
    c.templates = resolve(base_dir, j, "templates");
    c.utterances = resolve(base_dir, j, "utterances");
    c.response_patterns = resolve(base_dir, j, "response_patterns");
    c.pipeline.detector_threshold = j.value("detector_threshold", c.pipeline.detector_threshold);
    if (j.contains("score_range")) {
      c.pipeline.range.min = j.at("score_range").at(0).get<double>();
      c.pipeline.range.max = j.at("score_range").at(1).get<double>();
    }
    if (j.contains("selection")) c.selection = qgen::selection_config_from_json(j.at("selection"));
    c.bank_session_seconds = j.value("bank_session_seconds", c.bank_session_seconds);
    c.default_budget_seconds = j.value("default_budget_seconds", c.default_budget_seconds);
    c.silence_timeout_seconds = j.value("silence_timeout_seconds", c.silence_timeout_seconds);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("service config: ") + e.what());
  }
  if (!(c.pipeline.range.max > c.pipeline.range.min)) throw ConfigError("score_range must be increasing");
  return c;
}

ServiceConfig load_config(const fs::path& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

fs::path resolve_config_path(const std::optional<fs::path>& cli_path) {
  if (const char* env = std::getenv("MC_CONFIG"); env != nullptr && *env != '\0') return env;
  if (cli_path) return *cli_path;
  throw ConfigError("no config given: pass --config or set MC_CONFIG");
}

std::string_view to_string(SessionStatus s) { return s == SessionStatus::ACTIVE ? "ACTIVE" : "ENDED"; }

std::string_view to_string(BankStatus s) {
  switch (s) {
    case BankStatus::PENDING:
      return "pending";
    case BankStatus::READY:
      return "ready";
    case BankStatus::FAILED:
      return "failed";
  }
  return "failed";
}

Json to_json(const SessionRecord& r) {
  Json j{{"session_id", r.session_id},       {"doc_id", r.doc_id},
         {"bank_id", r.bank_id},             {"created_at", r.created_at},
         {"budget_seconds", r.budget_seconds}, {"seed", r.seed},
         {"status", std::string(to_string(r.status))}, {"transcript_ref", r.transcript_ref}};
  j["survey_ref"] = r.survey_ref ? Json(*r.survey_ref) : Json(nullptr);
  return j;
}

Clock system_clock() {
  return [] {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
  };
}

struct Service::Session {
  std::mutex mu;
  SessionRecord record;
  std::shared_ptr<const qgen::QuestionBank> bank;
  dialogue::DialogueContext ctx;
  dialogue::DialogueState state;
  fs::path events_path;
  std::vector<dialogue::UserEvent> events;
};

struct Service::Models {
  corpus::Resources resources;
  std::shared_ptr<const lexicon::Lexicons> lexicons;
  ml::Model detector;
  ml::Model scorer;
  qgen::TemplateBank templates;
};

Service::Service(ServiceConfig config, Clock clock) : config_(std::move(config)), clock_(std::move(clock)) {
  if (!config_.templates.empty()) base_context_.templates = qgen::TemplateBank::load(config_.templates);
  if (!config_.utterances.empty()) base_context_.utterances = dialogue::UtteranceBank::load(config_.utterances);
  if (!config_.response_patterns.empty()) {
    base_context_.patterns = dialogue::ResponsePatterns::load(config_.response_patterns);
  }
  if (!config_.embeddings.empty()) {
    auto lex = std::make_shared<lexicon::Lexicons>();
    lex->embeddings = lexicon::load_embeddings(config_.embeddings, config_.embeddings_format);
    if (!config_.norms.empty()) lex->norms = lexicon::load_norms(config_.norms);
    lexicons_ = std::move(lex);
    base_context_.embeddings = &lexicons_->embeddings;
  }
  try {
    fs::create_directories(config_.storage_dir / "banks");
    fs::create_directories(config_.storage_dir / "sessions");
    fs::create_directories(config_.storage_dir / "surveys");
  } catch (const fs::filesystem_error& e) {
    throw ConfigError(std::string("storage: ") + e.what());
  }
  recover_banks();
  recover_sessions();
}

Service::~Service() {
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
}

void Service::set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

std::string Service::next_id(const char* prefix, std::uint64_t& counter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06llu", prefix, static_cast<unsigned long long>(++counter));
  return buf;
}

void Service::recover_banks() {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(config_.storage_dir / "banks")) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const Json j = Json::parse(read_file(path));
    BankInfo info;
    info.bank_id = j.at("bank_id").get<std::string>();
    info.doc_id = j.value("doc_id", std::string());
    info.error = j.value("error", std::string());
    const auto status = j.value("status", std::string("failed"));
    if (status == "ready" && j.contains("bank")) {
      info.status = BankStatus::READY;
      info.bank = std::make_shared<const qgen::QuestionBank>(qgen::question_bank_from_json(j.at("bank")));
    } else {
      // A build that was pending when the process died does not resume.
      info.status = BankStatus::FAILED;
      if (status == "pending") info.error = "interrupted";
    }
    bank_counter_ = std::max(bank_counter_, id_number(info.bank_id));
    banks_[info.bank_id] = std::move(info);
  }
}

std::shared_ptr<Service::Session> Service::open_session(const SessionRecord& record,
                                                        std::shared_ptr<const qgen::QuestionBank> bank) {
  auto s = std::make_shared<Session>();
  s->record = record;
  s->bank = std::move(bank);
  s->ctx = base_context_;
  s->ctx.bank = s->bank;
  s->state = dialogue::new_session(*s->bank, record.budget_seconds, record.seed, record.session_id, true);
  s->events_path = config_.storage_dir / "sessions" / record.session_id / "events.jsonl";
  s->record.transcript_ref = "sessions/" + record.session_id + "/transcript";
  const auto survey = config_.storage_dir / "surveys" / (record.session_id + ".json");
  if (fs::exists(survey)) s->record.survey_ref = "surveys/" + record.session_id + ".json";
  return s;
}

void Service::recover_sessions() {
  for (const auto& j : read_log(config_.storage_dir / "sessions" / "index.jsonl")) {
    const SessionRecord record = record_from_json(j);
    session_counter_ = std::max(session_counter_, id_number(record.session_id));
    const auto bank_it = banks_.find(record.bank_id);
    if (bank_it == banks_.end() || !bank_it->second.bank) continue;
    auto s = open_session(record, bank_it->second.bank);
    for (const auto& ej : read_log(s->events_path)) {
      const auto event = dialogue::user_event_from_json(ej);
      if (s->state.phase == Phase::ENDED) break;
      s->state = dialogue::advance(s->ctx, s->state, event).state;
      s->events.push_back(event);
    }
    if (s->state.phase == Phase::ENDED) s->record.status = SessionStatus::ENDED;
    sessions_[record.session_id] = std::move(s);
  }
}

std::shared_ptr<const Service::Models> Service::models() {
  std::lock_guard lock(models_mu_);
  if (models_) return models_;
  if (config_.detector.empty() || config_.scorer.empty()) {
    throw ConfigError("bank building needs detector and scorer model paths in the config");
  }
  if (!lexicons_) throw ConfigError("bank building needs an embeddings path in the config");
  if (!fs::exists(config_.detector)) throw ConfigError("detector model not found: " + config_.detector.string());
  if (!fs::exists(config_.scorer)) throw ConfigError("scorer model not found: " + config_.scorer.string());
  if (config_.data_dir.empty()) throw ConfigError("bank building needs data_dir in the config");
  auto m = std::make_shared<Models>(Models{corpus::Resources::from_data_dir(config_.data_dir), lexicons_,
                                           ml::load_model(config_.detector, lexicon::kSentenceSchema),
                                           ml::load_model(config_.scorer, lexicon::kPairSchema),
                                           base_context_.templates});
  models_ = std::move(m);
  return models_;
}

std::string Service::build_bank(const BankRequest& request) {
  if (trim(request.text).empty()) throw ValidationError("uploaded text is empty");
  validate_utf8(request.text);
  auto m = models();
  BankInfo info;
  {
    std::lock_guard lock(mu_);
    info.bank_id = next_id("b", bank_counter_);
  }
  info.doc_id = request.doc_id.empty() ? "doc-" + info.bank_id : request.doc_id;
  const auto path = config_.storage_dir / "banks" / (info.bank_id + ".json");
  write_file_atomic(path, bank_file_json(info).dump());
  {
    std::lock_guard lock(mu_);
    banks_[info.bank_id] = info;
  }
  const double seconds = request.session_seconds.value_or(config_.bank_session_seconds);
  const std::string created_at = iso_utc(clock_());
  auto job = [this, m, info, request, seconds, created_at, path]() mutable {
    try {
      const auto doc = corpus::ingest(request.text, info.doc_id, request.title, m->resources);
      qgen::BankInputs inputs{doc, m->detector, m->scorer, *m->lexicons, m->templates};
      info.bank = std::make_shared<const qgen::QuestionBank>(
          qgen::build_question_bank(inputs, config_.pipeline, config_.selection, seconds, request.seed, created_at));
      info.status = BankStatus::READY;
    } catch (const std::exception& e) {
      info.status = BankStatus::FAILED;
      info.error = e.what();
    }
    try {
      write_file_atomic(path, bank_file_json(info).dump());
    } catch (const std::exception& e) {
      info.status = BankStatus::FAILED;
      info.error = e.what();
      info.bank.reset();
    }
    {
      std::lock_guard lock(mu_);
      banks_[info.bank_id] = info;
    }
    bank_cv_.notify_all();
  };
  std::lock_guard lock(mu_);
  workers_.emplace_back(std::move(job));
  return info.bank_id;
}

std::string Service::import_bank(const qgen::QuestionBank& bank) {
  BankInfo info;
  {
    std::lock_guard lock(mu_);
    info.bank_id = next_id("b", bank_counter_);
  }
  info.doc_id = bank.doc_id;
  info.status = BankStatus::READY;
  info.bank = std::make_shared<const qgen::QuestionBank>(bank);
  write_file_atomic(config_.storage_dir / "banks" / (info.bank_id + ".json"), bank_file_json(info).dump());
  std::lock_guard lock(mu_);
  banks_[info.bank_id] = info;
  bank_cv_.notify_all();
  return info.bank_id;
}

BankInfo Service::bank_info(const std::string& bank_id) const {
  std::lock_guard lock(mu_);
  const auto it = banks_.find(bank_id);
  if (it == banks_.end()) throw NotFoundError("unknown bank " + bank_id);
  return it->second;
}

BankInfo Service::wait_for_bank(const std::string& bank_id) const {
  std::unique_lock lock(mu_);
  if (banks_.find(bank_id) == banks_.end()) throw NotFoundError("unknown bank " + bank_id);
  bank_cv_.wait(lock, [&] { return banks_.at(bank_id).status != BankStatus::PENDING; });
  return banks_.at(bank_id);
}

SessionRecord Service::create_session(const std::optional<std::string>& bank_id, const std::optional<std::string>& doc_id,
                                      std::optional<double> budget_seconds, std::uint64_t seed) {
  if (bank_id.has_value() == doc_id.has_value()) throw ValidationError("give exactly one of bank_id or doc_id");
  const double budget = budget_seconds.value_or(config_.default_budget_seconds);
  if (!(budget >= 0)) throw ValidationError("budget_seconds must be non-negative");
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mu_);
    const BankInfo* chosen = nullptr;
    if (bank_id) {
      const auto it = banks_.find(*bank_id);
      if (it == banks_.end()) throw NotFoundError("unknown bank " + *bank_id);
      if (it->second.status != BankStatus::READY) throw ConflictError("bank " + *bank_id + " is not ready");
      chosen = &it->second;
    } else {
      // Ids are zero-padded and increasing, so the last match is the newest.
      for (const auto& [id, info] : banks_) {
        if (info.doc_id == *doc_id && info.status == BankStatus::READY) chosen = &info;
      }
      if (chosen == nullptr) throw NotFoundError("no ready bank for doc " + *doc_id);
    }
    SessionRecord record;
    record.session_id = next_id("s", session_counter_);
    record.doc_id = chosen->doc_id;
    record.bank_id = chosen->bank_id;
    record.created_at = iso_utc(clock_());
    record.budget_seconds = budget;
    record.seed = seed;
    s = open_session(record, chosen->bank);
  }
  fs::create_directories(s->events_path.parent_path());
  {
    std::lock_guard lock(index_mu_);
    const auto& r = s->record;
    append_line_durable(config_.storage_dir / "sessions" / "index.jsonl",
                        Json{{"session_id", r.session_id},
                             {"doc_id", r.doc_id},
                             {"bank_id", r.bank_id},
                             {"created_at", r.created_at},
                             {"budget_seconds", r.budget_seconds},
                             {"seed", r.seed}}
                            .dump());
  }
  std::lock_guard lock(mu_);
  sessions_[s->record.session_id] = s;
  return s->record;
}

std::shared_ptr<Service::Session> Service::find_session(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + session_id);
  return it->second;
}

SessionRecord Service::session_record(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mu);
  return s->record;
}

std::vector<SessionRecord> Service::sessions() const {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  std::vector<SessionRecord> out;
  for (const auto& s : all) {
    std::lock_guard lock(s->mu);
    out.push_back(s->record);
  }
  return out;
}

PostResult Service::post_event(const std::string& session_id, EventKind kind, const std::string& text) {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mu);
  return post_event_at(*s, kind, text, clock_());
}

PostResult Service::post_utterance(const std::string& session_id, const std::string& text) {
  return post_event(session_id, EventKind::UTTERANCE, text);
}

PostResult Service::post_event_at(Session& s, EventKind kind, const std::string& text, double at) {
  if (s.state.phase == Phase::ENDED) throw ConflictError("session " + s.record.session_id + " has ended");
  if (kind == EventKind::UTTERANCE && trim(text).empty()) throw ValidationError("utterance text is empty");
  const dialogue::UserEvent event{kind, text, at};
  // Write-ahead: the event is durable before the dialogue moves.
  append_line_durable(s.events_path, dialogue::to_json(event).dump());
  if (fault_hook_) fault_hook_("after_event_write");
  return apply_locked(s, event);
}

PostResult Service::apply_locked(Session& s, const dialogue::UserEvent& event) {
  const std::size_t before = s.state.turns.size();
  auto result = dialogue::advance(s.ctx, s.state, event);
  s.state = std::move(result.state);
  s.events.push_back(event);
  if (s.state.phase == Phase::ENDED) s.record.status = SessionStatus::ENDED;
  PostResult out;
  out.utterances = std::move(result.utterances);
  out.turns.assign(s.state.turns.begin() + static_cast<std::ptrdiff_t>(before), s.state.turns.end());
  out.phase = s.state.phase;
  publish(s.record.session_id, out.turns);
  return out;
}

dialogue::SessionTranscript Service::transcript(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mu);
  return dialogue::transcript(s->state);
}

dialogue::DialogueState Service::state(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mu);
  return s->state;
}

std::vector<dialogue::UserEvent> Service::event_log(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mu);
  return s->events;
}

std::vector<std::string> Service::tick(double now) {
  std::vector<std::string> touched;
  if (!(config_.silence_timeout_seconds > 0)) return touched;
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  for (const auto& s : all) {
    std::unique_lock lock(s->mu, std::try_to_lock);
    if (!lock.owns_lock()) continue;  // a request is in flight; it resets the clock anyway
    const auto phase = s->state.phase;
    if (phase != Phase::AWAITING_RESPONSE && phase != Phase::FOLLOW_UP_AWAIT) continue;
    if (now - s->state.last_at < config_.silence_timeout_seconds) continue;
    post_event_at(*s, EventKind::SILENCE_TIMEOUT, "", now);
    touched.push_back(s->record.session_id);
  }
  return touched;
}

evalstats::SurveyResponse Service::submit_survey(const std::string& session_id, const Json& payload) {
  auto s = find_session(session_id);
  {
    std::lock_guard lock(s->mu);
    if (s->state.phase != Phase::ENDED) throw ConflictError("session " + session_id + " has not ended");
  }
  if (!payload.is_object()) throw ValidationError("survey payload must be a JSON object");
  Json body = payload;
  if (body.contains("session_id") && body.at("session_id") != session_id) {
    throw ValidationError("session_id in the body does not match the URL");
  }
  body["session_id"] = session_id;
  const auto response = evalstats::survey_response_from_json(body);
  const auto path = config_.storage_dir / "surveys" / (session_id + ".json");
  std::lock_guard lock(survey_mu_);
  if (fs::exists(path)) {
    const auto stored = evalstats::survey_response_from_json(Json::parse(read_file(path)));
    if (stored == response) return stored;
    throw ConflictError("a different survey was already stored for session " + session_id);
  }
  write_file_atomic(path, evalstats::to_json(response).dump());
  std::lock_guard slock(s->mu);
  s->record.survey_ref = "surveys/" + session_id + ".json";
  return response;
}

std::vector<evalstats::SurveyResponse> Service::survey_responses() const {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(config_.storage_dir / "surveys")) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<evalstats::SurveyResponse> out;
  for (const auto& f : files) out.push_back(evalstats::survey_response_from_json(Json::parse(read_file(f))));
  return out;
}

std::vector<evalstats::SurveyStats> Service::summary() const {
  const auto responses = survey_responses();
  return evalstats::summarize_survey(responses);
}

std::uint64_t Service::subscribe(const std::string& session_id, TurnCallback callback) {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mu);
  std::uint64_t token = 0;
  {
    std::lock_guard slock(sub_mu_);
    token = ++sub_counter_;
    subscribers_[token] = {session_id, callback};
  }
  for (const auto& t : s->state.turns) callback(session_id, t);
  return token;
}

void Service::unsubscribe(std::uint64_t token) {
  std::lock_guard lock(sub_mu_);
  subscribers_.erase(token);
}

void Service::publish(const std::string& session_id, const std::vector<dialogue::Turn>& turns) {
  std::vector<TurnCallback> targets;
  {
    std::lock_guard lock(sub_mu_);
    for (const auto& [token, sub] : subscribers_) {
      if (sub.first == session_id) targets.push_back(sub.second);
    }
  }
  for (const auto& t : turns) {
    for (const auto& cb : targets) cb(session_id, t);
  }
}

// ---- HTTP routing ----

HttpResponse error_response(const std::exception& e) {
  int status = 500;
  std::string code = "internal_error";
  if (dynamic_cast<const ValidationError*>(&e) != nullptr) {
    status = 400;
    code = "validation_error";
  } else if (dynamic_cast<const FormatError*>(&e) != nullptr || dynamic_cast<const ContractViolation*>(&e) != nullptr ||
             dynamic_cast<const nlohmann::json::exception*>(&e) != nullptr) {
    status = 400;
    code = "bad_request";
  } else if (dynamic_cast<const NotFoundError*>(&e) != nullptr) {
    status = 404;
    code = "not_found";
  } else if (dynamic_cast<const ConflictError*>(&e) != nullptr) {
    status = 409;
    code = "conflict";
  } else if (dynamic_cast<const ConfigError*>(&e) != nullptr) {
    code = "config_error";
  }
  return HttpResponse{status, "application/json", Json{{"code", code}, {"message", e.what()}}.dump()};
}

namespace {

HttpResponse json_response(int status, const Json& j) { return HttpResponse{status, "application/json", j.dump()}; }

Json parse_body(const std::string& body) {
  if (trim(body).empty()) return Json::object();
  Json j = Json::parse(body);
  if (!j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

Json turns_json(const std::vector<dialogue::Turn>& turns) {
  Json arr = Json::array();
  for (const auto& t : turns) arr.push_back(dialogue::to_json(t));
  return arr;
}

Json bank_info_json(const BankInfo& info) {
  Json j{{"bank_id", info.bank_id}, {"doc_id", info.doc_id}, {"status", std::string(to_string(info.status))}};
  if (!info.error.empty()) j["error"] = info.error;
  if (info.bank) j["bank"] = qgen::to_json(*info.bank);
  return j;
}

std::optional<std::string> opt_string(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_string()) throw ValidationError(std::string(key) + " must be a string");
  return j.at(key).get<std::string>();
}

std::uint64_t opt_seed(const Json& j) {
  if (!j.contains("seed")) return 0;
  if (!j.at("seed").is_number_unsigned()) throw ValidationError("seed must be a non-negative integer");
  return j.at("seed").get<std::uint64_t>();
}

HttpResponse route(Service& svc, const std::string& method, const std::vector<std::string>& parts,
                   const std::string& query, const std::string& body) {
  const auto n = parts.size();
  const bool get = method == "GET";
  const bool post = method == "POST";
  auto method_not_allowed = [] {
    return json_response(405, Json{{"code", "method_not_allowed"}, {"message", "method not allowed"}});
  };

  if (n == 1 && parts[0] == "health") return json_response(200, Json{{"status", "ok"}});

  if (n >= 1 && parts[0] == "banks") {
    if (n == 1) {
      if (!post) return method_not_allowed();
      const Json j = parse_body(body);
      if (j.contains("bank")) return json_response(201, Json{{"bank_id", svc.import_bank(qgen::question_bank_from_json(j.at("bank")))}, {"status", "ready"}});
      BankRequest req;
      req.text = opt_string(j, "text").value_or("");
      req.doc_id = opt_string(j, "doc_id").value_or("");
      req.title = opt_string(j, "title").value_or("");
      req.seed = opt_seed(j);
      if (j.contains("session_seconds")) req.session_seconds = j.at("session_seconds").get<double>();
      const auto id = svc.build_bank(req);
      return json_response(202, Json{{"bank_id", id}, {"status", "pending"}});
    }
    if (n == 2) {
      if (!get) return method_not_allowed();
      return json_response(200, bank_info_json(svc.bank_info(parts[1])));
    }
  }

  if (n >= 1 && parts[0] == "sessions") {
    if (n == 1) {
      if (post) {
        const Json j = parse_body(body);
        std::optional<double> budget;
        if (j.contains("budget_seconds")) {
          if (!j.at("budget_seconds").is_number()) throw ValidationError("budget_seconds must be a number");
          budget = j.at("budget_seconds").get<double>();
        }
        const auto rec = svc.create_session(opt_string(j, "bank_id"), opt_string(j, "doc_id"), budget, opt_seed(j));
        Json out = to_json(rec);
        out["phase"] = std::string(dialogue::to_string(svc.state(rec.session_id).phase));
        return json_response(201, out);
      }
      if (get) {
        Json arr = Json::array();
        for (const auto& r : svc.sessions()) arr.push_back(to_json(r));
        return json_response(200, Json{{"sessions", arr}});
      }
      return method_not_allowed();
    }
    const std::string& id = parts[1];
    if (n == 2) {
      if (!get) return method_not_allowed();
      Json out = to_json(svc.session_record(id));
      out["phase"] = std::string(dialogue::to_string(svc.state(id).phase));
      return json_response(200, out);
    }
    if (n == 3 && parts[2] == "utterances") {
      if (!post) return method_not_allowed();
      const Json j = parse_body(body);
      auto kind = EventKind::UTTERANCE;
      if (const auto k = opt_string(j, "kind")) {
        try {
          kind = dialogue::event_kind_from_string(*k);
        } catch (const std::exception&) {
          throw ValidationError("unknown event kind " + *k);
        }
      }
      const auto text = opt_string(j, "text").value_or("");
      const auto result = svc.post_event(id, kind, text);
      const auto rec = svc.session_record(id);
      return json_response(200, Json{{"session_id", id},
                                     {"phase", std::string(dialogue::to_string(result.phase))},
                                     {"status", std::string(to_string(rec.status))},
                                     {"utterances", result.utterances},
                                     {"turns", turns_json(result.turns)}});
    }
    if (n == 3 && parts[2] == "transcript") {
      if (!get) return method_not_allowed();
      const auto t = svc.transcript(id);
      const auto rec = svc.session_record(id);
      return json_response(200, Json{{"session_id", id},
                                     {"status", std::string(to_string(rec.status))},
                                     {"phase", std::string(dialogue::to_string(svc.state(id).phase))},
                                     {"turns", turns_json(t.turns)}});
    }
    if (n == 3 && parts[2] == "survey") {
      if (!post) return method_not_allowed();
      const Json j = Json::parse(body);
      return json_response(201, evalstats::to_json(svc.submit_survey(id, j)));
    }
  }

  if (n == 2 && parts[0] == "surveys" && parts[1] == "summary") {
    if (!get) return method_not_allowed();
    const auto stats = svc.summary();
    if (query.find("format=tsv") != std::string::npos) {
      return HttpResponse{200, "text/tab-separated-values; charset=utf-8", evalstats::render_tsv(stats)};
    }
    if (query.find("format=table") != std::string::npos) {
      return HttpResponse{200, "text/plain; charset=utf-8", evalstats::render_table(stats)};
    }
    return json_response(200, evalstats::summary_json(stats));
  }

  return json_response(404, Json{{"code", "not_found"}, {"message", "no route for " + method}});
}

}  // namespace

HttpResponse handle_request(Service& service, const HttpRequest& request) {
  std::string path = request.target;
  std::string query;
  if (const auto q = path.find('?'); q != std::string::npos) {
    query = path.substr(q + 1);
    path.resize(q);
  }
  std::vector<std::string> parts;
  for (auto& p : split(path, '/')) {
    if (!p.empty()) parts.push_back(std::move(p));
  }
  try {
    return route(service, request.method, parts, query, request.body);
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

}  // namespace mc::service
