#include "cli.hpp"

#include <signal.h>

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

#include "mc/dialogue.hpp"
#include "mc/error.hpp"
#include "mc/evalstats.hpp"
#include "mc/service.hpp"

#ifndef MC_DATA_DIR
#define MC_DATA_DIR "data"
#endif

namespace mc::cli {

namespace fs = std::filesystem;

namespace {

struct LexiconFlags {
  std::string embeddings;
  std::string format = "text";
  std::string norms;

  void attach(CLI::App* app) {
    app->add_option("--embeddings", embeddings, "word2vec embeddings file");
    app->add_option("--embeddings-format", format, "text or binary")->check(CLI::IsMember({"text", "binary"}));
    app->add_option("--norms", norms, "psycholinguistic norms CSV");
  }

  lexicon::Lexicons load() const {
    lexicon::Lexicons lex;
    if (!embeddings.empty()) {
      lex.embeddings = lexicon::load_embeddings(
          embeddings, format == "binary" ? lexicon::EmbeddingFormat::binary : lexicon::EmbeddingFormat::text);
    }
    if (!norms.empty()) lex.norms = lexicon::load_norms(norms);
    return lex;
  }
};

struct RangeFlags {
  double min = 0.0;
  double max = 3.0;

  void attach(CLI::App* app) {
    app->add_option("--score-min", min, "lower end of the raw novelty scale");
    app->add_option("--score-max", max, "upper end of the raw novelty scale");
  }

  metaphor::ScoreRange range() const {
    if (!(max > min)) throw ConfigError("--score-max must exceed --score-min");
    return {min, max};
  }
};

// Writes to `path`, or to `out` when path is empty or "-".
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_file_atomic(path, text);
  }
}

qgen::TemplateBank templates_from(const std::string& path) {
  return path.empty() ? qgen::TemplateBank::defaults() : qgen::TemplateBank::load(path);
}

double train_accuracy(const ml::Model& model, const std::vector<metaphor::LabeledSentence>& labeled,
                      const corpus::Tagger& tagger, const lexicon::Lexicons& lex) {
  if (labeled.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& l : labeled) {
    const auto s = corpus::analyze_sentence(l.sentence_text, tagger);
    const bool predicted = metaphor::classify_sentence(model, s, lex) >= 0.5;
    hits += predicted == (l.label == 1);
  }
  return static_cast<double>(hits) / static_cast<double>(labeled.size());
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Metaphor discussion companion: corpus ingest, model training, question banks, chat and survey."};
  app.name("mc");
  app.require_subcommand(1);
  std::string data_dir = MC_DATA_DIR;
  app.add_option("--data-dir", data_dir, "tagger lexicons and abbreviation list")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Plain text or Gutenberg file to a tagged document JSON");
  std::string ingest_path, ingest_id, ingest_title, ingest_out;
  ingest->add_option("txt", ingest_path, "input text")->required();
  ingest->add_option("--id", ingest_id, "document id")->required();
  ingest->add_option("--title", ingest_title, "document title");
  ingest->add_option("--out", ingest_out, "output JSON (default stdout)");

  // train-detector
  auto* tdet = app.add_subcommand("train-detector", "Train the sentence-level novel-metaphor detector");
  std::string tdet_pairs, tdet_out;
  double tau = 1.5;
  std::uint64_t tdet_seed = 0;
  std::size_t tdet_epochs = 200, tdet_hidden = 0;
  double tdet_lr = 0.5;
  LexiconFlags tdet_lex;
  RangeFlags tdet_range;
  tdet->add_option("pairs", tdet_pairs, "pair dataset TSV (sentence, w1, w2, score)")->required();
  tdet->add_option("--tau", tau, "a sentence is positive when some pair scores above tau")->capture_default_str();
  tdet->add_option("--out", tdet_out, "model JSON")->required();
  tdet->add_option("--seed", tdet_seed, "random seed")->capture_default_str();
  tdet->add_option("--epochs", tdet_epochs)->capture_default_str();
  tdet->add_option("--lr", tdet_lr)->capture_default_str();
  tdet->add_option("--hidden", tdet_hidden, "hidden units (0 = linear)")->capture_default_str();
  tdet_lex.attach(tdet);
  tdet_range.attach(tdet);

  // train-scorer
  auto* tsc = app.add_subcommand("train-scorer", "Train the pair novelty regressor");
  std::vector<std::string> tsc_pairs;
  std::string tsc_out;
  std::uint64_t tsc_seed = 0;
  std::size_t tsc_epochs = 300, tsc_hidden = 0;
  double tsc_lr = 0.05;
  LexiconFlags tsc_lex;
  RangeFlags tsc_range;
  tsc->add_option("pairs", tsc_pairs, "one or more pair dataset TSVs")->required();
  tsc->add_option("--out", tsc_out, "model JSON")->required();
  tsc->add_option("--seed", tsc_seed, "random seed")->capture_default_str();
  tsc->add_option("--epochs", tsc_epochs)->capture_default_str();
  tsc->add_option("--lr", tsc_lr)->capture_default_str();
  tsc->add_option("--hidden", tsc_hidden, "hidden units (0 = linear)")->capture_default_str();
  tsc_lex.attach(tsc);
  tsc_range.attach(tsc);

  // score
  auto* score = app.add_subcommand("score", "Scored metaphor pairs of a document, one JSON per line");
  std::string score_doc, score_det, score_sc, score_out;
  double score_threshold = 0.5;
  LexiconFlags score_lex;
  RangeFlags score_range;
  score->add_option("doc", score_doc, "document JSON")->required();
  score->add_option("--detector", score_det)->required();
  score->add_option("--scorer", score_sc)->required();
  score->add_option("--threshold", score_threshold, "detector probability cut-off")->capture_default_str();
  score->add_option("--out", score_out, "output JSONL (default stdout)");
  score_lex.attach(score);
  score_range.attach(score);

  // bank
  auto* bank = app.add_subcommand("bank", "Build a question bank for a document");
  std::string bank_doc, bank_det, bank_sc, bank_out, bank_templates, bank_selection;
  std::string bank_created_at = "1970-01-01T00:00:00Z";
  double bank_budget = dialogue::kDefaultBudgetSeconds, bank_threshold = 0.5;
  std::uint64_t bank_seed = 0;
  LexiconFlags bank_lex;
  RangeFlags bank_range;
  bank->add_option("doc", bank_doc, "document JSON")->required();
  bank->add_option("--budget", bank_budget, "simulated session seconds")->capture_default_str();
  bank->add_option("--seed", bank_seed, "random seed")->capture_default_str();
  bank->add_option("--out", bank_out, "bank JSON (default stdout)");
  bank->add_option("--detector", bank_det)->required();
  bank->add_option("--scorer", bank_sc)->required();
  bank->add_option("--threshold", bank_threshold, "detector probability cut-off")->capture_default_str();
  bank->add_option("--templates", bank_templates, "template TSV (default built-in T1-T4)");
  bank->add_option("--selection", bank_selection, "selection weights JSON");
  bank->add_option("--created-at", bank_created_at, "timestamp stored in the bank")->capture_default_str();
  bank_lex.attach(bank);
  bank_range.attach(bank);

  // chat
  auto* chat = app.add_subcommand("chat", "Terminal discussion over a question bank; one user line per turn");
  std::string chat_bank, chat_templates, chat_utterances, chat_patterns, chat_transcript, chat_events;
  std::string chat_session = "chat";
  double chat_budget = dialogue::kDefaultBudgetSeconds, chat_step = 30.0;
  std::uint64_t chat_seed = 0;
  LexiconFlags chat_lex;
  chat->add_option("bank", chat_bank, "bank JSON")->required();
  chat->add_option("--budget", chat_budget, "session seconds")->capture_default_str();
  chat->add_option("--seed", chat_seed, "random seed")->capture_default_str();
  chat->add_option("--step", chat_step, "simulated seconds per user line")->capture_default_str();
  chat->add_option("--session-id", chat_session)->capture_default_str();
  chat->add_option("--templates", chat_templates);
  chat->add_option("--utterances", chat_utterances);
  chat->add_option("--patterns", chat_patterns, "response pattern TSV");
  chat->add_option("--transcript-out", chat_transcript, "write the transcript as JSONL");
  chat->add_option("--events-out", chat_events, "write the event log as JSONL");
  chat_lex.attach(chat);

  // survey-summarize
  auto* survey = app.add_subcommand("survey-summarize", "Mode, median, 95% CI and t-test per statement and session");
  std::string survey_path, survey_format = "table", survey_out;
  survey->add_option("responses", survey_path, "survey responses JSONL")->required();
  survey->add_option("--format", survey_format)->check(CLI::IsMember({"table", "tsv", "json"}))->capture_default_str();
  survey->add_option("--out", survey_out, "output file (default stdout)");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP + WebSocket service");
  std::string serve_config;
  std::optional<unsigned short> serve_port;
  unsigned serve_threads = 2;
  serve->add_option("--config", serve_config, "service config JSON (MC_CONFIG overrides)");
  serve->add_option("--port", serve_port, "override the configured port");
  serve->add_option("--threads", serve_threads)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "mc: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  try {
    if (*ingest) {
      const auto resources = corpus::Resources::from_data_dir(data_dir);
      const auto doc = corpus::ingest(read_file(ingest_path), ingest_id, ingest_title, resources);
      emit(ingest_out, corpus::to_json(doc).dump(1) + "\n", out);
      err << "ingest: " << doc.sentences.size() << " sentences\n";
      return kOk;
    }

    if (*tdet) {
      const auto resources = corpus::Resources::from_data_dir(data_dir);
      const auto lex = tdet_lex.load();
      const auto records = metaphor::load_pair_dataset(tdet_pairs, tdet_range.range());
      const auto labeled = metaphor::label_sentences(records, tau);
      metaphor::DetectorOptions opts;
      opts.hidden_dim = tdet_hidden;
      opts.hyper.seed = tdet_seed;
      opts.hyper.epochs = tdet_epochs;
      opts.hyper.learning_rate = tdet_lr;
      const auto model = metaphor::train_detector(labeled, resources.tagger, lex, opts);
      ml::save_model(model, tdet_out);
      const auto positives = std::count_if(labeled.begin(), labeled.end(), [](const auto& l) { return l.label == 1; });
      err << "train-detector: " << labeled.size() << " sentences (" << positives << " positive), final loss "
          << model.train_meta().final_loss << ", training accuracy "
          << train_accuracy(model, labeled, resources.tagger, lex) << "\n";
      return kOk;
    }

    if (*tsc) {
      const auto resources = corpus::Resources::from_data_dir(data_dir);
      const auto lex = tsc_lex.load();
      std::vector<metaphor::PairDatasetRecord> records;
      for (const auto& p : tsc_pairs) {
        auto part = metaphor::load_pair_dataset(p, tsc_range.range());
        records.insert(records.end(), part.begin(), part.end());
      }
      metaphor::ScorerOptions opts;
      opts.hidden_dim = tsc_hidden;
      opts.hyper.seed = tsc_seed;
      opts.hyper.epochs = tsc_epochs;
      opts.hyper.learning_rate = tsc_lr;
      opts.range = tsc_range.range();
      const auto model = metaphor::train_scorer(records, resources.tagger, lex, opts);
      ml::save_model(model, tsc_out);
      err << "train-scorer: " << records.size() << " pairs, final loss " << model.train_meta().final_loss << "\n";
      return kOk;
    }

    if (*score) {
      const auto lex = score_lex.load();
      const auto doc = corpus::load_document(score_doc);
      const auto detector = ml::load_model(score_det, lexicon::kSentenceSchema);
      const auto scorer = ml::load_model(score_sc, lexicon::kPairSchema);
      const metaphor::PipelineConfig pipeline{score_threshold, score_range.range()};
      const auto scored = metaphor::score_document(doc, detector, scorer, lex, pipeline);
      emit(score_out, metaphor::to_jsonl(scored), out);
      return kOk;
    }

    if (*bank) {
      const auto lex = bank_lex.load();
      const auto doc = corpus::load_document(bank_doc);
      const auto detector = ml::load_model(bank_det, lexicon::kSentenceSchema);
      const auto scorer = ml::load_model(bank_sc, lexicon::kPairSchema);
      const auto templates = templates_from(bank_templates);
      qgen::SelectionConfig cfg;
      if (!bank_selection.empty()) {
        try {
          cfg = qgen::selection_config_from_json(Json::parse(read_file(bank_selection)));
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(bank_selection + ": " + e.what());
        }
      }
      const metaphor::PipelineConfig pipeline{bank_threshold, bank_range.range()};
      const qgen::BankInputs inputs{doc, detector, scorer, lex, templates};
      const auto qb = qgen::build_question_bank(inputs, pipeline, cfg, bank_budget, bank_seed, bank_created_at);
      emit(bank_out, qgen::to_json(qb).dump(1) + "\n", out);
      err << "bank: " << qb.questions.size() << " questions\n";
      return kOk;
    }

    if (*chat) {
      const auto lex = chat_lex.load();
      dialogue::DialogueContext ctx;
      ctx.bank = std::make_shared<const qgen::QuestionBank>(qgen::load_question_bank(chat_bank));
      ctx.embeddings = chat_lex.embeddings.empty() ? nullptr : &lex.embeddings;
      ctx.templates = templates_from(chat_templates);
      if (!chat_utterances.empty()) ctx.utterances = dialogue::UtteranceBank::load(chat_utterances);
      if (!chat_patterns.empty()) ctx.patterns = dialogue::ResponsePatterns::load(chat_patterns);
      auto state = dialogue::new_session(*ctx.bank, chat_budget, chat_seed, chat_session, true);
      std::vector<dialogue::UserEvent> events;
      double now = 0.0;
      auto step = [&](dialogue::UserEvent e) {
        events.push_back(e);
        auto r = dialogue::advance(ctx, state, e);
        state = std::move(r.state);
        for (const auto& u : r.utterances) out << "Grace: " << u << "\n";
      };
      step({dialogue::EventKind::SESSION_START, "", now});
      std::string line;
      while (state.phase != dialogue::Phase::ENDED) {
        out << "> " << std::flush;
        if (!std::getline(in, line)) {
          step({dialogue::EventKind::QUIT, "", now});
          break;
        }
        now += chat_step;
        const auto text = trim(line);
        if (text.empty()) continue;
        if (text == "/quit") {
          step({dialogue::EventKind::QUIT, "", now});
        } else if (text == "/silence") {
          step({dialogue::EventKind::SILENCE_TIMEOUT, "", now});
        } else {
          step({dialogue::EventKind::UTTERANCE, text, now});
        }
      }
      if (!chat_transcript.empty()) write_file_atomic(chat_transcript, dialogue::to_jsonl(dialogue::transcript(state)));
      if (!chat_events.empty()) {
        std::string log;
        for (const auto& e : events) log += dialogue::to_json(e).dump() + "\n";
        write_file_atomic(chat_events, log);
      }
      return kOk;
    }

    if (*survey) {
      const auto responses = evalstats::load_responses_jsonl(survey_path);
      const auto stats = evalstats::summarize_survey(responses);
      std::string text;
      if (survey_format == "tsv") {
        text = evalstats::render_tsv(stats);
      } else if (survey_format == "json") {
        text = evalstats::summary_json(stats).dump(1) + "\n";
      } else {
        text = evalstats::render_table(stats);
      }
      emit(survey_out, text, out);
      return kOk;
    }

    if (*serve) {
      auto config = service::load_config(
          service::resolve_config_path(serve_config.empty() ? std::nullopt : std::optional<fs::path>(serve_config)));
      if (serve_port) config.port = *serve_port;
      sigset_t set;
      sigemptyset(&set);
      sigaddset(&set, SIGINT);
      sigaddset(&set, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &set, nullptr);
      service::Service svc(config);
      service::Server server(svc, serve_threads);
      const auto port = server.start(config.host, config.port);
      err << "serving on " << config.host << ":" << port << "\n";
      int sig = 0;
      sigwait(&set, &sig);
      server.stop();
      return kOk;
    }
  } catch (const std::exception& e) {
    err << "mc: error: " << e.what() << "\n";
    return kFailure;
  }
  err << app.help();
  return kUsage;
}

}  // namespace mc::cli
