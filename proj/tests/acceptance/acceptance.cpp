// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "mc/error.hpp"
#include "mc/service.hpp"
#include "oracles/stats_oracle.hpp"
#include "synthetic.hpp"

using namespace mc;
namespace fs = std::filesystem;
using metaphor::ScoredPair;

namespace {

// Tolerances and sizes, pinned.
constexpr double kE2eSeconds = 60.0;
constexpr std::size_t kMinQuestions = 5;
constexpr std::size_t kLabelRecords = 1000;
constexpr double kDetectorAccuracy = 0.95;
constexpr std::size_t kDetectorEpochs = 200;
constexpr double kScorerTolerance = 0.05;
constexpr int kGradDraws = 100;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradToleranceLinear = 1e-6;
constexpr int kStatSamples = 1000;
constexpr double kStatTolerance = 1e-6;
constexpr double kPTolerance = 1e-4;
constexpr double kTCrit = 2.0595;
constexpr double kTCritTolerance = 5e-4;
constexpr int kSelectionTrials = 10000;
constexpr int kDialogueSequences = 10000;
constexpr int kCrashTrials = 60;

const fs::path kFixtures = MC_FIXTURE_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failures; the first few are reported.
struct Checker {
  std::size_t failures = 0;
  std::vector<std::string> notes;
  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (++failures <= 3) notes.push_back(what);
  }
  Outcome outcome(std::string summary) const {
    if (failures == 0) return {true, std::move(summary)};
    std::string d = std::to_string(failures) + " failure(s): ";
    for (std::size_t i = 0; i < notes.size(); ++i) d += (i ? "; " : "") + notes[i];
    return {false, d};
  }
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mc_accept_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int mc_cli(const std::vector<std::string>& args) {
  std::istringstream in;
  std::ostringstream out, err;
  const int code = cli::run(args, in, out, err);
  if (code != 0) throw Error("mc " + args.front() + " failed: " + err.str());
  return code;
}

// ---- 1 ----

Outcome end_to_end() {
  TempDir dir("e2e");
  const auto p = [&](const char* name) { return (dir.path / name).string(); };
  const auto start = std::chrono::steady_clock::now();

  mc_cli({"ingest", (kFixtures / "corpus" / "pride_excerpt.txt").string(), "--id", "pride", "--title",
          "Pride and Prejudice", "--out", p("doc.json")});
  // Synthetic training fixtures: lexicon and a novelty-rated pair dataset.
  const auto doc = corpus::load_document(p("doc.json"));
  const synthetic::LexiconOptions lopt;
  const auto words = synthetic::vocabulary({doc});
  lexicon::save_embeddings(synthetic::embeddings(words, lopt), p("embeddings.txt"), lexicon::EmbeddingFormat::text);
  write_file_atomic(p("norms.csv"), synthetic::norms_csv(words, lopt));
  lexicon::Lexicons lex;
  lex.embeddings = lexicon::load_embeddings(p("embeddings.txt"), lexicon::EmbeddingFormat::text);
  lex.norms = lexicon::load_norms(p("norms.csv"));
  metaphor::save_pair_dataset(metaphor::synthesize_pair_dataset(doc.sentences, lex, {}), p("pairs.tsv"));

  const std::vector<std::string> lex_flags{"--embeddings", p("embeddings.txt"), "--norms", p("norms.csv")};
  auto with_lex = [&](std::vector<std::string> a) {
    a.insert(a.end(), lex_flags.begin(), lex_flags.end());
    return a;
  };
  mc_cli(with_lex({"train-detector", p("pairs.tsv"), "--out", p("detector.json")}));
  mc_cli(with_lex({"train-scorer", p("pairs.tsv"), "--out", p("scorer.json")}));
  mc_cli(with_lex({"bank", p("doc.json"), "--detector", p("detector.json"), "--scorer", p("scorer.json"), "--out",
                   p("bank.json")}));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto bank = qgen::load_question_bank(p("bank.json"));
  Checker c;
  c.require(seconds < kE2eSeconds, "took " + fmt(seconds) + " s");
  c.require(bank.questions.size() >= kMinQuestions, std::to_string(bank.questions.size()) + " questions");
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> slots;
  std::set<std::pair<std::string, std::string>> word_pairs;
  for (const auto& q : bank.questions) {
    const auto& pr = q.pair();
    c.require(slots.insert({pr.sentence_index, pr.w1_token, pr.w2_token}).second, "duplicate slot " + q.question_id);
    c.require(word_pairs.insert({to_lower_ascii(pr.w1.surface), to_lower_ascii(pr.w2.surface)}).second,
              "duplicate word pair in " + q.question_id);
    const bool words_in = q.text.find(pr.w1.surface) != std::string::npos && q.text.find(pr.w2.surface) != std::string::npos;
    const bool quoted = q.text.find("\"" + pr.sentence_text + "\"") != std::string::npos;
    c.require(words_in || quoted, q.question_id + " lacks its pair words and sentence");
  }
  return c.outcome(std::to_string(bank.questions.size()) + " questions, " + std::to_string(doc.sentences.size()) +
                   " sentences, " + fmt(std::round(seconds * 100) / 100) + " s");
}

// ---- 2 ----

Outcome simile() {
  const auto resources = corpus::Resources::from_data_dir(MC_DATA_DIR);
  const auto doc = corpus::ingest("She frowned like a thunderstorm.", "simile", "", resources);
  Checker c;
  c.require(doc.sentences.size() == 1, "expected one sentence");
  bool found = false;
  for (const auto& p : metaphor::extract_pairs(doc.sentences.at(0), doc.doc_id)) {
    if (p.w1.surface == "frowned" && p.w2.surface == "thunderstorm" && p.pattern == metaphor::Pattern::SIMILE) {
      found = true;
    }
  }
  c.require(found, "(frowned, thunderstorm, SIMILE) not extracted");
  return c.outcome("(frowned, thunderstorm) via SIMILE");
}

// ---- 3 ----

Outcome labels() {
  Rng rng(31);
  std::vector<metaphor::PairDatasetRecord> records;
  for (std::size_t i = 0; i < kLabelRecords; ++i) {
    records.push_back({"sentence " + std::to_string(rng.below(150)) + ".", "a", "b",
                       std::round(rng.uniform(0, 3) * 4) / 4});
  }
  Checker c;
  for (double tau : {0.0, 0.75, 1.5, 2.25, 3.0}) {
    // Brute force: per distinct sentence (first appearance), max score > tau.
    std::vector<std::string> order;
    std::map<std::string, double> best;
    for (const auto& r : records) {
      if (!best.count(r.sentence_text)) {
        order.push_back(r.sentence_text);
        best[r.sentence_text] = r.raw_score;
      }
      best[r.sentence_text] = std::max(best[r.sentence_text], r.raw_score);
    }
    std::vector<metaphor::LabeledSentence> expected;
    for (const auto& s : order) expected.push_back({s, best[s] > tau ? 1 : 0});
    c.require(metaphor::label_sentences(records, tau) == expected, "mismatch at tau " + fmt(tau));
  }
  return c.outcome(std::to_string(kLabelRecords) + " records, 5 thresholds, exact");
}

// ---- 4 ----

Outcome learning() {
  Checker c;
  // Detector: the sentence-schema classifier on a separable set.
  ml::ModelSpec spec;
  spec.input_dim = 12;
  spec.task = ml::Task::binary_classification;
  spec.feature_schema_id = std::string(lexicon::kSentenceSchema);
  Rng rng(4);
  std::vector<double> w(spec.input_dim);
  for (auto& x : w) x = rng.uniform(-1, 1);
  std::vector<ml::Sample> data;
  while (data.size() < 400) {
    std::vector<double> x(spec.input_dim);
    for (auto& v : x) v = rng.uniform(-1, 1);
    double z = 0.05;
    for (std::size_t k = 0; k < x.size(); ++k) z += w[k] * x[k];
    if (std::abs(z) < 0.2) continue;
    data.push_back({x, {z > 0 ? 1.0 : 0.0}});
  }
  metaphor::DetectorOptions dopt;
  c.require(dopt.hyper.epochs <= kDetectorEpochs, "detector default exceeds the epoch cap");
  const auto det = ml::train(spec, data, dopt.hyper);
  std::size_t hits = 0;
  for (const auto& s : data) hits += (det.predict(s.x)[0] >= 0.5) == (s.target[0] == 1.0);
  const double acc = double(hits) / double(data.size());
  c.require(acc >= kDetectorAccuracy, "detector accuracy " + fmt(acc));
  c.require(ml::to_json(ml::train(spec, data, dopt.hyper)).dump() == ml::to_json(det).dump(),
            "detector not bit-reproducible");

  // Scorer: constant raw score over real pair features.
  const auto resources = corpus::Resources::from_data_dir(MC_DATA_DIR);
  const auto doc = corpus::ingest(read_file(kFixtures / "corpus" / "pride_excerpt.txt"), "pride", "", resources);
  const auto words = synthetic::vocabulary({doc});
  lexicon::Lexicons lex;
  lex.embeddings = synthetic::embeddings(words, {});
  auto records = metaphor::synthesize_pair_dataset(doc.sentences, lex, {});
  const double constant = 1.2;
  const metaphor::ScoreRange range;
  for (auto& r : records) r.raw_score = constant;
  const metaphor::ScorerOptions sopt;
  const auto scorer = metaphor::train_scorer(records, resources.tagger, lex, sopt);
  double worst = 0;
  for (const auto& r : records) {
    const auto fv = lexicon::pair_features(metaphor::record_pair_words(r, resources.tagger), lex);
    const double novelty = std::clamp(0.5 * (scorer.forward(fv) + 1.0), 0.0, 1.0);
    worst = std::max(worst, std::abs(novelty - range.normalize(constant)));
  }
  c.require(worst <= kScorerTolerance, "scorer error " + fmt(worst));
  c.require(ml::to_json(metaphor::train_scorer(records, resources.tagger, lex, sopt)).dump() ==
                ml::to_json(scorer).dump(),
            "scorer not bit-reproducible");
  return c.outcome("detector accuracy " + fmt(acc) + " in " + std::to_string(dopt.hyper.epochs) +
                   " epochs, scorer max error " + fmt(worst) + " over " + std::to_string(records.size()) + " pairs");
}

// ---- 5 ----

Outcome gradients() {
  Rng rng(55);
  Checker c;
  double worst = 0, worst_linear = 0;
  for (int d = 0; d < kGradDraws; ++d) {
    ml::ModelSpec spec;
    spec.input_dim = 1 + rng.below(10);
    spec.hidden_dim = d % 2 == 0 ? 0 : 1 + rng.below(8);
    spec.task = rng.below(2) == 0 ? ml::Task::binary_classification : ml::Task::regression;
    spec.feature_schema_id = "grad";
    const auto model = ml::Model::initialized(spec, rng);
    std::vector<double> x(spec.input_dim);
    for (auto& v : x) v = rng.uniform(-2, 2);
    const std::vector<double> y{spec.task == ml::Task::regression ? rng.uniform(-1, 1) : double(rng.below(2))};
    const double err = ml::grad_check(model, x, y);
    if (spec.hidden_dim == 0) {
      worst_linear = std::max(worst_linear, err);
      c.require(err <= kGradToleranceLinear, "linear draw " + std::to_string(d) + " error " + fmt(err));
    } else {
      worst = std::max(worst, err);
      c.require(err <= kGradTolerance, "draw " + std::to_string(d) + " error " + fmt(err));
    }
  }
  return c.outcome(std::to_string(kGradDraws) + " draws, max " + fmt(worst) + " (linear " + fmt(worst_linear) + ")");
}

// ---- 6 ----

Outcome statistics() {
  using namespace evalstats;
  Checker c;
  Rng rng(66);
  double worst = 0, worst_p = 0;
  std::map<std::size_t, double> crit;
  for (int i = 0; i < kStatSamples; ++i) {
    const std::size_t n = 2 + rng.below(39);
    std::vector<int> ints(n);
    for (auto& v : ints) v = 1 + int(rng.below(5));
    const std::vector<double> v(ints.begin(), ints.end());
    c.require(mode(ints) == oracle::mode(ints), "mode sample " + std::to_string(i));
    c.require(median_tie_avg(ints) == oracle::median(v), "median sample " + std::to_string(i));
    worst = std::max(worst, std::abs(mean(v) - oracle::mean(v)));
    const double sd = oracle::sd(v);
    if (!crit.count(n)) crit[n] = oracle::t_quantile(0.975, double(n - 1));
    const double hw = sd == 0 ? 0.0 : crit[n] * sd / std::sqrt(double(n));
    worst = std::max(worst, std::abs(mean_ci95(v).halfwidth - hw));
    const auto tt = one_sample_t(v, kLikertMidpoint);
    if (sd > 0) {
      const double t = (oracle::mean(v) - kLikertMidpoint) / (sd / std::sqrt(double(n)));
      worst = std::max(worst, std::abs(tt.t - t));
      worst_p = std::max(worst_p, std::abs(tt.p - oracle::two_sided_p(t, double(n - 1))));
    }
  }
  c.require(worst <= kStatTolerance, "statistic error " + fmt(worst));
  c.require(worst_p <= kPTolerance, "p error " + fmt(worst_p));
  const double tc = t_quantile(0.975, 25);
  c.require(std::abs(tc - kTCrit) <= kTCritTolerance, "t_crit " + fmt(tc));
  const auto zero = one_sample_t(std::vector<double>{2, 4, 3, 1, 5}, 3.0);
  c.require(zero.t == 0.0 && zero.p == 1.0, "t=0 gave p " + fmt(zero.p));

  // Table structure: 9 statements x 3 sessions x 4 statistics.
  std::vector<SurveyResponse> rs;
  const std::array<int, 3> cohort{26, 18, 7};
  for (int s = 1; s <= 3; ++s) {
    for (int i = 0; i < cohort[s - 1]; ++i) {
      SurveyResponse r;
      r.session_id = std::to_string(s) + "-" + std::to_string(i);
      r.session_number = s;
      for (const auto& st : kStatements) r.ratings[std::string(st.id)] = 3 + int(rng.below(3));
      rs.push_back(r);
    }
  }
  const auto stats = summarize_survey(rs);
  c.require(stats.size() == 27, "expected 27 groups");
  const auto table = split(render_table(stats), '\n');
  std::size_t cells = 0;
  for (std::size_t row = 1; row <= 9 && row < table.size(); ++row) {
    auto parts = split(table[row], '|');
    c.require(parts.size() == 13, "row " + std::to_string(row) + " has " + std::to_string(parts.size()) + " cells");
    for (std::size_t k = 1; k < parts.size(); ++k) cells += trim(parts[k]) != "-";
  }
  c.require(cells == 9 * 3 * 4, "filled cells " + std::to_string(cells));
  c.require(format_ci(3.94, 0.31) == "3.9 ± .3", "CI format");
  c.require(format_p(0.001) == ".00", "p format");
  return c.outcome(std::to_string(kStatSamples) + " samples, max error " + fmt(worst) + ", p error " + fmt(worst_p) +
                   ", t_crit " + fmt(std::round(tc * 1e4) / 1e4) + ", table 9x3x4");
}

// ---- 7 ----

struct World {
  lexicon::EmbeddingTable table{4};
  std::vector<std::string> words;
};

World make_world(Rng& rng) {
  World w;
  for (int i = 0; i < 12; ++i) {
    const std::string word = "w" + std::to_string(i);
    std::vector<float> v(4);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    w.table.insert(word, v);
    w.words.push_back(word);
  }
  return w;
}

ScoredPair random_pair(const World& w, Rng& rng, std::size_t sentence) {
  ScoredPair sp;
  sp.pair.doc_id = "d";
  sp.pair.sentence_index = sentence;
  sp.pair.w1_token = 0;
  sp.pair.w2_token = 1;
  sp.pair.w1.surface = w.words[rng.below(w.words.size())];
  sp.pair.w1.pos = corpus::Pos::ADJ;
  sp.pair.w2.surface = w.words[rng.below(w.words.size())];
  sp.pair.w2.pos = corpus::Pos::NOUN;
  for (int k = 0; k < 4; ++k) sp.pair.sentence_text += w.words[rng.below(w.words.size())] + " ";
  // Coarse novelty grid so exact ties happen.
  sp.novelty = 0.5 + 0.1 * double(rng.below(6));
  return sp;
}

Outcome selection() {
  Checker c;
  Rng rng(77);
  std::size_t picks = 0, ties = 0;
  for (int trial = 0; trial < kSelectionTrials; ++trial) {
    const auto w = make_world(rng);
    qgen::SelectionConfig cfg;
    cfg.w_novelty = rng.uniform(0.1, 2);
    cfg.w_pair_sim = rng.uniform(0, 1);
    cfg.w_sent_sim = rng.uniform(0, 1);
    cfg.seconds_per_question = 60 + 60 * double(rng.below(3));
    std::vector<ScoredPair> cands;
    const std::size_t n = 1 + rng.below(10);
    for (std::size_t i = 0; i < n; ++i) cands.push_back(random_pair(w, rng, i));
    // Twin of an earlier candidate in a later slot: equal utility by construction.
    if (rng.below(3) == 0) {
      auto twin = cands[rng.below(cands.size())];
      twin.pair.sentence_index = 100;
      cands.push_back(twin);
      ++ties;
    }
    std::vector<ScoredPair> history;
    for (std::size_t i = 0; i < rng.below(4); ++i) history.push_back(cands[rng.below(cands.size())]);
    const double remaining = rng.uniform(0, 3 * cfg.seconds_per_question);
    const std::string tag = "trial " + std::to_string(trial);

    const auto pick = qgen::select_next(cands, history, remaining, cfg, w.table);
    // (a) budget gate.
    if (remaining < cfg.seconds_per_question) c.require(!pick, tag + ": picked past the budget");
    if (!pick) continue;
    ++picks;
    // (b) no history repeats.
    for (const auto& h : history) c.require(!h.pair.same_slot(pick->pair), tag + ": repeated a discussed pair");
    // (c) positive weight scaling keeps the argmax.
    auto scaled = cfg;
    const double k = std::exp(rng.uniform(-3, 3));
    scaled.w_novelty *= k;
    scaled.w_pair_sim *= k;
    scaled.w_sent_sim *= k;
    const auto pick_scaled = qgen::select_next(cands, history, remaining, scaled, w.table);
    c.require(pick_scaled && pick_scaled->pair.same_slot(pick->pair), tag + ": argmax moved under scaling");
    // (d) deterministic tie-breaks: same inputs, any candidate order, same pick.
    auto shuffled = cands;
    rng.shuffle(shuffled);
    const auto again = qgen::select_next(shuffled, history, remaining, cfg, w.table);
    c.require(again && again->pair.same_slot(pick->pair), tag + ": pick depends on candidate order");
    const auto repeat = qgen::select_next(cands, history, remaining, cfg, w.table);
    c.require(repeat && *repeat == *pick, tag + ": repeat call differs");
  }
  return c.outcome(std::to_string(kSelectionTrials) + " trials, " + std::to_string(picks) + " picks, " +
                   std::to_string(ties) + " with planted ties");
}

// ---- 8 ----

std::shared_ptr<const qgen::QuestionBank> fuzz_bank(Rng& rng) {
  const std::size_t n = 1 + rng.below(7);
  std::vector<ScoredPair> cands;
  for (std::size_t i = 0; i < n; ++i) {
    ScoredPair sp;
    sp.pair.doc_id = "d";
    sp.pair.sentence_index = i;
    sp.pair.w1_token = 1;
    sp.pair.w2_token = 2;
    sp.pair.pattern = metaphor::Pattern(rng.below(lexicon::kPatternCount));
    sp.pair.w1.surface = "tenor" + std::to_string(i);
    sp.pair.w2.surface = "vehicle" + std::to_string(i);
    sp.pair.sentence_text = "The tenor" + std::to_string(i) + " vehicle" + std::to_string(i) + ".";
    sp.novelty = 0.7 + 0.01 * double(i);
    cands.push_back(sp);
  }
  return std::make_shared<const qgen::QuestionBank>(qgen::bank_from_candidates(
      "d", cands, lexicon::EmbeddingTable{}, qgen::TemplateBank::defaults(), qgen::SelectionConfig{}, 1e9, 1, "t"));
}

Outcome dialogue_fuzz() {
  using namespace dialogue;
  Checker c;
  Rng rng(88);
  const std::vector<std::string> texts{"yes",      "I don't know", "Could you repeat that?", "no idea", "ok",
                                       "I think the storm stands for how angry she felt in that moment.", "What?"};
  std::size_t events_total = 0;
  for (int seq = 0; seq < kDialogueSequences; ++seq) {
    DialogueContext ctx;
    ctx.bank = fuzz_bank(rng);
    const double budget = 120.0 * double(rng.below(8));
    const auto initial = new_session(*ctx.bank, budget, rng.next(), "fuzz-" + std::to_string(seq), true);
    auto s = initial;
    std::vector<UserEvent> log;
    std::map<std::string, int> followups;
    double t = 0;
    const std::string tag = "sequence " + std::to_string(seq);
    while (s.phase != Phase::ENDED) {
      UserEvent e;
      const auto k = rng.below(25);
      e.kind = k == 0 ? EventKind::QUIT : k < 5 ? EventKind::SILENCE_TIMEOUT : k == 5 ? EventKind::SESSION_START
                                                                                      : EventKind::UTTERANCE;
      if (e.kind == EventKind::UTTERANCE) e.text = texts[rng.below(texts.size())];
      t += rng.uniform(0, 100);
      e.at = t;
      const auto r = advance(ctx, s, e);
      for (auto p : r.path) {
        if (p == Phase::FOLLOW_UP_AWAIT) followups[*r.state.current_question]++;
      }
      s = r.state;
      log.push_back(e);
      if (log.size() > 2000) break;
    }
    events_total += log.size();
    c.require(s.phase == Phase::ENDED, tag + ": never ended");
    c.require(std::set<std::string>(s.asked.begin(), s.asked.end()).size() == s.asked.size(),
              tag + ": repeated a question");
    for (const auto& [q, n] : followups) c.require(n <= 1, tag + ": " + std::to_string(n) + " follow-ups on " + q);
    // Persist the log, read it back, replay.
    std::string persisted;
    for (const auto& e : log) persisted += to_json(e).dump() + "\n";
    std::vector<UserEvent> loaded;
    for (const auto& line : split(persisted, '\n')) {
      if (!line.empty()) loaded.push_back(user_event_from_json(Json::parse(line)));
    }
    c.require(to_jsonl(transcript(replay(ctx, initial, loaded))) == to_jsonl(transcript(s)),
              tag + ": replay differs");
  }
  return c.outcome(std::to_string(kDialogueSequences) + " sequences, " + std::to_string(events_total) + " events");
}

// ---- 9 ----

Outcome durability() {
  using namespace service;
  using dialogue::EventKind;
  Checker c;
  Rng rng(99);
  const auto bank = qgen::load_question_bank(kFixtures / "golden" / "bank3.json");
  const std::vector<std::string> texts{"yes", "I don't know", "The thunder is her temper breaking loose.", "What?"};
  std::size_t acked_turns = 0;
  for (int trial = 0; trial < kCrashTrials; ++trial) {
    const std::string tag = "trial " + std::to_string(trial);
    TempDir dir("crash");
    ServiceConfig cfg;
    cfg.storage_dir = dir.path;
    auto now = std::make_shared<double>(0.0);
    const Clock clock = [now] { return *now; };
    std::string sid;
    std::vector<dialogue::Turn> acked;
    std::vector<dialogue::Turn> pre_crash;
    bool crashed = false;
    {
      Service svc(cfg, clock);
      sid = svc.create_session(svc.import_bank(bank), std::nullopt, std::nullopt, rng.next()).session_id;
      const std::size_t crash_at = 1 + rng.below(8);
      std::size_t writes = 0;
      svc.set_fault_hook([&](std::string_view point) {
        if (point == "after_event_write" && ++writes == crash_at) throw SimulatedCrash("kill");
      });
      for (int step = 0; step < 10; ++step) {
        *now += rng.uniform(1, 60);
        const auto kind = step == 0 ? EventKind::SESSION_START
                                    : rng.below(5) == 0 ? EventKind::SILENCE_TIMEOUT : EventKind::UTTERANCE;
        const auto text = kind == EventKind::UTTERANCE ? texts[rng.below(texts.size())] : "";
        try {
          const auto r = svc.post_event(sid, kind, text);
          acked.insert(acked.end(), r.turns.begin(), r.turns.end());
        } catch (const SimulatedCrash&) {
          crashed = true;
          break;
        } catch (const ConflictError&) {
          break;  // ended before the crash point
        }
      }
      pre_crash = svc.transcript(sid).turns;
    }
    acked_turns += acked.size();
    c.require(pre_crash == acked, tag + ": live transcript differs from acknowledged turns");
    // Half the trials also leave a torn record behind.
    if (crashed && trial % 2 == 1) {
      std::ofstream out(dir.path / "sessions" / sid / "events.jsonl", std::ios::app);
      out << R"({"kind":"UTTERANCE","te)";
    }
    Service recovered(cfg, clock);
    const auto turns = recovered.transcript(sid).turns;
    c.require(turns.size() >= acked.size() && std::equal(acked.begin(), acked.end(), turns.begin()),
              tag + ": acknowledged turn lost");
    dialogue::DialogueContext ctx;
    ctx.bank = std::make_shared<const qgen::QuestionBank>(bank);
    const auto rec = recovered.session_record(sid);
    const auto fresh = dialogue::new_session(bank, rec.budget_seconds, rec.seed, sid, true);
    const auto replayed = dialogue::transcript(dialogue::replay(ctx, fresh, recovered.event_log(sid)));
    c.require(replayed.turns == turns, tag + ": recovery replay differs from the stored log");
    // With the in-flight event dropped, replay gives exactly the pre-crash transcript.
    auto log = recovered.event_log(sid);
    if (crashed && !log.empty()) log.pop_back();
    c.require(dialogue::transcript(dialogue::replay(ctx, fresh, log)).turns == pre_crash,
              tag + ": replay of acknowledged events differs from the pre-crash transcript");
  }
  return c.outcome(std::to_string(kCrashTrials) + " crash trials, " + std::to_string(acked_turns) +
                   " acknowledged turns kept");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"end-to-end pipeline", end_to_end},   {"simile coverage", simile},
      {"sentence labelling oracle", labels}, {"learning sanity", learning},
      {"gradient check", gradients},         {"statistics oracle", statistics},
      {"selection properties", selection},   {"dialogue robustness", dialogue_fuzz},
      {"service durability", durability},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
