// Writes the synthetic lexicon and pair-dataset fixtures used by the
// end-to-end pipeline runs.
#include <CLI11.hpp>
#include <iostream>

#include "mc/error.hpp"
#include "mc/metaphor.hpp"
#include "synthetic.hpp"

#ifndef MC_DATA_DIR
#define MC_DATA_DIR "data"
#endif

int main(int argc, char** argv) {
  using namespace mc;
  CLI::App app{"Synthetic fixture generator"};
  app.require_subcommand(1);

  auto* lex = app.add_subcommand("lexicon", "embeddings (text + binary) and norms for a vocabulary");
  std::vector<std::string> docs;
  std::vector<std::string> extra;
  std::string out_dir = ".";
  synthetic::LexiconOptions opts;
  lex->add_option("--doc", docs, "document JSON whose words form the vocabulary")->required();
  lex->add_option("--extra", extra, "additional words");
  lex->add_option("--dim", opts.dim)->capture_default_str();
  lex->add_option("--clusters", opts.clusters)->capture_default_str();
  lex->add_option("--seed", opts.seed)->capture_default_str();
  lex->add_option("--out-dir", out_dir)->capture_default_str();

  auto* pairs = app.add_subcommand("pairs", "synthetic novelty-rated pair dataset from a document");
  std::string pairs_doc, pairs_emb, pairs_norms, pairs_out;
  metaphor::SyntheticDatasetOptions popts;
  pairs->add_option("doc", pairs_doc)->required();
  pairs->add_option("--embeddings", pairs_emb)->required();
  pairs->add_option("--norms", pairs_norms)->required();
  pairs->add_option("--seed", popts.seed)->capture_default_str();
  pairs->add_option("--noise", popts.noise)->capture_default_str();
  pairs->add_option("--max-per-sentence", popts.max_pairs_per_sentence)->capture_default_str();
  pairs->add_option("--out", pairs_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*lex) {
      std::vector<corpus::Document> loaded;
      for (const auto& d : docs) loaded.push_back(corpus::load_document(d));
      auto words = synthetic::vocabulary(loaded);
      for (const auto& w : extra) words.push_back(to_lower_ascii(w));
      std::sort(words.begin(), words.end());
      words.erase(std::unique(words.begin(), words.end()), words.end());
      std::filesystem::create_directories(out_dir);
      const auto table = synthetic::embeddings(words, opts);
      const std::filesystem::path dir = out_dir;
      lexicon::save_embeddings(table, dir / "embeddings.txt", lexicon::EmbeddingFormat::text);
      lexicon::save_embeddings(table, dir / "embeddings.bin", lexicon::EmbeddingFormat::binary);
      write_file_atomic(dir / "norms.csv", synthetic::norms_csv(words, opts));
      std::cerr << "lexicon: " << words.size() << " words, dim " << opts.dim << "\n";
    } else if (*pairs) {
      lexicon::Lexicons lexicons;
      lexicons.embeddings = lexicon::load_embeddings(pairs_emb, lexicon::EmbeddingFormat::text);
      lexicons.norms = lexicon::load_norms(pairs_norms);
      const auto doc = corpus::load_document(pairs_doc);
      const auto records = metaphor::synthesize_pair_dataset(doc.sentences, lexicons, popts);
      metaphor::save_pair_dataset(records, pairs_out);
      std::cerr << "pairs: " << records.size() << " records\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "mc-fixtures: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
