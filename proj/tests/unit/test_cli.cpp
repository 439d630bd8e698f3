#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "mc/dialogue.hpp"
#include "mc/error.hpp"
#include "mc/evalstats.hpp"
#include "mc/qgen.hpp"

using namespace mc;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MC_FIXTURE_DIR;
const fs::path kBuilt = MC_BUILT_FIXTURES;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run mc_run(std::vector<std::string> args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = cli::run(args, in, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mc_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::string> lex_flags() {
  return {"--embeddings", (kBuilt / "embeddings.txt").string(), "--norms", (kBuilt / "norms.csv").string()};
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  auto r = mc_run({"frobnicate"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("mc:") == 0);
  CHECK(mc_run({}).code == cli::kUsage);
  CHECK(mc_run({"ingest"}).code == cli::kUsage);  // missing positional
  CHECK(mc_run({"survey-summarize", "x.jsonl", "--format", "xml"}).code == cli::kUsage);
  r = mc_run({"--help"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("ingest") != std::string::npos);
}

TEST_CASE("domain errors exit 1 with a one-line diagnostic") {
  auto r = mc_run({"ingest", "/no/such/file.txt", "--id", "x"});
  CHECK(r.code == cli::kFailure);
  CHECK(r.err.rfind("mc: error: ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  r = mc_run({"ingest", (kFixtures / "gutenberg" / "bad_utf8.txt").string(), "--id", "x"});
  CHECK(r.code == cli::kFailure);
  r = mc_run({"train-scorer", (kBuilt / "pairs.tsv").string(), "--out", "/tmp/x.json", "--score-min", "3",
              "--score-max", "1"});
  CHECK(r.code == cli::kFailure);
}

TEST_CASE("ingest matches the module call") {
  const auto txt = kFixtures / "corpus" / "pride_excerpt.txt";
  const auto r = mc_run({"ingest", txt.string(), "--id", "pp", "--title", "P&P"});
  REQUIRE(r.code == cli::kOk);
  const auto doc = corpus::ingest(read_file(txt), "pp", "P&P", corpus::Resources::from_data_dir(MC_DATA_DIR));
  CHECK(corpus::document_from_json(Json::parse(r.out)) == doc);
  CHECK(r.err == "ingest: " + std::to_string(doc.sentences.size()) + " sentences\n");
}

TEST_CASE("bank is deterministic and equals the module pipeline") {
  TempDir dir("bank");
  const auto doc_path = kBuilt / "doc.json";
  const auto common = with({"bank", doc_path.string(), "--detector", (kBuilt / "detector.json").string(), "--scorer",
                            (kBuilt / "scorer.json").string(), "--seed", "5"},
                           lex_flags());
  const auto a = mc_run(common);
  const auto b = mc_run(common);
  REQUIRE(a.code == cli::kOk);
  CHECK(a.out == b.out);

  lexicon::Lexicons lex;
  lex.embeddings = lexicon::load_embeddings(kBuilt / "embeddings.txt", lexicon::EmbeddingFormat::text);
  lex.norms = lexicon::load_norms(kBuilt / "norms.csv");
  const auto doc = corpus::load_document(doc_path);
  const auto det = ml::load_model(kBuilt / "detector.json");
  const auto sc = ml::load_model(kBuilt / "scorer.json");
  const auto templates = qgen::TemplateBank::defaults();
  const qgen::BankInputs inputs{doc, det, sc, lex, templates};
  const auto expected = qgen::build_question_bank(inputs, metaphor::PipelineConfig{}, qgen::SelectionConfig{}, 1800,
                                                  5, "1970-01-01T00:00:00Z");
  CHECK(qgen::question_bank_from_json(Json::parse(a.out)) == expected);

  const auto out = dir.path / "bank.json";
  REQUIRE(mc_run(with(common, {"--out", out.string()})).code == cli::kOk);
  CHECK(read_file(out) == a.out);
}

TEST_CASE("training commands are reproducible") {
  TempDir dir("train");
  const auto pairs = (kBuilt / "pairs.tsv").string();
  for (const char* cmd : {"train-detector", "train-scorer"}) {
    CAPTURE(cmd);
    const auto m1 = (dir.path / "m1.json").string();
    const auto m2 = (dir.path / "m2.json").string();
    REQUIRE(mc_run(with({cmd, pairs, "--out", m1, "--epochs", "20"}, lex_flags())).code == cli::kOk);
    REQUIRE(mc_run(with({cmd, pairs, "--out", m2, "--epochs", "20"}, lex_flags())).code == cli::kOk);
    CHECK(read_file(m1) == read_file(m2));
    CHECK(ml::load_model(m1).train_meta().epochs_run == 20);
  }
}

TEST_CASE("score emits one json line per scored pair") {
  const auto r = mc_run(with({"score", (kBuilt / "doc.json").string(), "--detector",
                              (kBuilt / "detector.json").string(), "--scorer", (kBuilt / "scorer.json").string()},
                             lex_flags()));
  REQUIRE(r.code == cli::kOk);
  const auto lines = split(r.out, '\n');
  std::size_t n = 0;
  for (const auto& l : lines) {
    if (l.empty()) continue;
    const auto j = Json::parse(l);
    CHECK(j.contains("novelty"));
    ++n;
  }
  CHECK(n > 0);
}

TEST_CASE("chat follows the dialogue module and logs replayable events") {
  TempDir dir("chat");
  const auto bank = kFixtures / "golden" / "bank3.json";
  const auto transcript = dir.path / "t.jsonl";
  const auto events = dir.path / "e.jsonl";
  const std::string input =
      "yes\nI think it shows how dark and stormy her mood was.\nI don't know\n/silence\n\n/quit\nignored\n";
  const auto r = mc_run({"chat", bank.string(), "--seed", "7", "--session-id", "golden", "--step", "30",
                         "--transcript-out", transcript.string(), "--events-out", events.string()},
                        input);
  REQUIRE(r.code == cli::kOk);
  CHECK(r.out.rfind("Grace: Hi, I'm Grace!", 0) == 0);

  // Same wording as the golden run; only the clock differs.
  const auto got = dialogue::transcript_from_jsonl("golden", read_file(transcript));
  const auto golden =
      dialogue::transcript_from_jsonl("golden", read_file(kFixtures / "golden" / "dialogue_transcript.jsonl"));
  REQUIRE(got.turns.size() == golden.turns.size());
  for (std::size_t i = 0; i < got.turns.size(); ++i) {
    CAPTURE(i);
    CHECK(got.turns[i].text == golden.turns[i].text);
    CHECK(got.turns[i].speaker == golden.turns[i].speaker);
  }

  std::vector<dialogue::UserEvent> log;
  for (const auto& l : split(read_file(events), '\n')) {
    if (!l.empty()) log.push_back(dialogue::user_event_from_json(Json::parse(l)));
  }
  REQUIRE(log.size() == 6);
  CHECK(log[4].kind == dialogue::EventKind::SILENCE_TIMEOUT);
  CHECK(log[5].at == 180.0);  // the blank line consumed a step
  dialogue::DialogueContext ctx;
  ctx.bank = std::make_shared<const qgen::QuestionBank>(qgen::load_question_bank(bank));
  const auto replayed = dialogue::replay(ctx, dialogue::new_session(*ctx.bank, 1800, 7, "golden", true), log);
  CHECK(dialogue::to_jsonl(dialogue::transcript(replayed)) == read_file(transcript));

  // End of input ends the session.
  const auto eof = mc_run({"chat", bank.string()}, "yes\n");
  CHECK(eof.code == cli::kOk);
  CHECK(eof.out.find("Grace: ") != std::string::npos);
}

TEST_CASE("survey-summarize formats") {
  TempDir dir("survey");
  const auto path = dir.path / "r.jsonl";
  std::string lines;
  Rng rng(3);
  for (int s = 1; s <= 3; ++s) {
    for (int i = 0; i < 5; ++i) {
      evalstats::SurveyResponse r;
      r.session_id = "s" + std::to_string(s * 10 + i);
      r.session_number = s;
      for (const auto& st : evalstats::kStatements) r.ratings[std::string(st.id)] = 1 + int(rng.below(5));
      lines += evalstats::to_json(r).dump() + "\n";
    }
  }
  write_file_atomic(path, lines);
  const auto stats = evalstats::summarize_survey(evalstats::load_responses_jsonl(path));
  auto r = mc_run({"survey-summarize", path.string()});
  REQUIRE(r.code == cli::kOk);
  CHECK(r.out == evalstats::render_table(stats));
  r = mc_run({"survey-summarize", path.string(), "--format", "tsv"});
  CHECK(r.out == evalstats::render_tsv(stats));
  r = mc_run({"survey-summarize", path.string(), "--format", "json"});
  CHECK(Json::parse(r.out) == evalstats::summary_json(stats));

  write_file_atomic(path, lines + "{\"session_number\": 9}\n");
  r = mc_run({"survey-summarize", path.string()});
  CHECK(r.code == cli::kFailure);
  CHECK(r.err.find(":16:") != std::string::npos);
}

TEST_CASE("serve without a config fails cleanly") {
  ::unsetenv("MC_CONFIG");
  const auto r = mc_run({"serve"});
  CHECK(r.code == cli::kFailure);
  CHECK(r.err.find("MC_CONFIG") != std::string::npos);
}
