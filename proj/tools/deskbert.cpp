// Command-line front end: prepare-data, build-vocab, pretrain, eval, ablate,
// gradcheck and synth-corpus. Exit codes: 0 success, 1 user or config
// error, 2 internal invariant violation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deskbert/error.hpp"
#include "deskbert/harness/commands.hpp"

namespace fs = std::filesystem;
using namespace deskbert;

namespace {

struct Common {
  std::string config_path;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scheme;
  std::optional<std::string> strategy;
  std::optional<std::size_t> sl_train;
  std::optional<std::size_t> sl_eval;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration");
  cmd->add_option("--preset", c.preset, "Built-in configuration when --config is absent (desk, toy-mlm, base, large)");
  cmd->add_option("--seed", c.seed, "Override the configured seed");
  cmd->add_option("--scheme", c.scheme, "Positional encoding: none, frpe, prpe, pape");
  cmd->add_option("--strategy", c.strategy, "Masking strategy: char, wwm");
  cmd->add_option("--sl-train", c.sl_train, "Training sequence length");
  cmd->add_option("--sl-eval", c.sl_eval, "Evaluation sequence length (ablation)");
}

harness::RunConfig resolve(const Common& c) {
  harness::RunConfig cfg = c.config_path.empty() ? harness::preset(c.preset) : harness::load_run_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.scheme) {
    cfg.encoder.encoding.kind = posenc::parse_scheme(*c.scheme);
    cfg.ablation.schemes = {cfg.encoder.encoding.kind};
  }
  if (c.strategy) {
    cfg.strategy = data::parse_strategy(*c.strategy);
    cfg.ablation.strategies = {cfg.strategy};
  }
  if (c.sl_train) {
    cfg.encoder.max_seq_len = *c.sl_train;
    cfg.ablation.sl_train = *c.sl_train;
  }
  if (c.sl_eval) cfg.ablation.sl_eval = *c.sl_eval;
  cfg.schedule.total_steps = cfg.total_steps;
  cfg.validate();
  return cfg;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw UserError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Desk-scale encoder pretraining with relative positional encodings"};
  app.require_subcommand(1);

  // build-vocab
  std::vector<std::string> bv_corpora;
  std::string bv_out;
  std::size_t bv_min_count = 1, bv_max_size = 0;
  auto* bv = app.add_subcommand("build-vocab", "Character vocabulary from corpus files");
  bv->add_option("--corpus", bv_corpora, "Corpus file(s)")->required();
  bv->add_option("--out", bv_out, "Vocabulary file")->required();
  bv->add_option("--min-count", bv_min_count, "Drop characters seen fewer times");
  bv->add_option("--max-size", bv_max_size, "Upper bound including special tokens (0 = none)");

  // prepare-data
  Common pd_c;
  std::string pd_out, pd_corpus, pd_lexicon, pd_vocab;
  auto* pd = app.add_subcommand("prepare-data", "Corpus to masked sentence-pair examples");
  add_common(pd, pd_c);
  pd->add_option("--corpus", pd_corpus, "Corpus file (overrides data.corpus)");
  pd->add_option("--lexicon", pd_lexicon, "Lexicon file for whole-word masking (overrides data.lexicon)");
  pd->add_option("--vocab", pd_vocab, "Vocabulary file (overrides data.vocab)");
  pd->add_option("--out", pd_out, "Example file (.jsonl)")->required();

  // pretrain
  Common pt_c;
  std::string pt_out, pt_examples, pt_init, pt_resume;
  std::optional<std::uint64_t> pt_steps;
  auto* pt = app.add_subcommand("pretrain", "Train the encoder on an example file");
  add_common(pt, pt_c);
  pt->add_option("--examples", pt_examples, "Example file (overrides data.train_examples)");
  pt->add_option("--out", pt_out, "Output directory (overrides output_dir)");
  pt->add_option("--steps", pt_steps, "Override total_steps");
  pt->add_option("--init-from", pt_init, "Initialize weights from a checkpoint directory");
  pt->add_option("--resume", pt_resume, "Continue from a checkpoint directory");

  // eval
  std::string ev_ckpt, ev_examples, ev_out;
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on an example file");
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint directory")->required();
  ev->add_option("--examples", ev_examples, "Example file")->required();
  ev->add_option("--out", ev_out, "Report file (default stdout)");

  // ablate
  Common ab_c;
  std::string ab_out = "ablation";
  std::optional<std::size_t> ab_steps;
  auto* ab = app.add_subcommand("ablate", "Positional-encoding x masking grid on the offset-copy task");
  add_common(ab, ab_c);
  ab->add_option("--out", ab_out, "Output directory for ablation.tsv / ablation.json");
  ab->add_option("--steps", ab_steps, "Training steps per cell");

  // gradcheck
  Common gc_c;
  std::string gc_out;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full model per scheme");
  add_common(gc, gc_c);
  gc->add_option("--out", gc_out, "Report file (default stdout)");

  // synth-corpus
  data::SyntheticOptions sy_o;
  std::string sy_out;
  auto* sy = app.add_subcommand("synth-corpus", "Write the synthetic toy-language corpus and lexicon");
  sy->add_option("--out", sy_out, "Output directory")->required();
  sy->add_option("--seed", sy_o.seed, "Generator seed");
  sy->add_option("--symbols", sy_o.num_symbols, "Alphabet size");
  sy->add_option("--documents", sy_o.num_documents, "Number of documents");
  sy->add_option("--sentences", sy_o.sentences_per_document, "Sentences per document");
  sy->add_option("--min-length", sy_o.min_sentence_length, "Shortest sentence");
  sy->add_option("--max-length", sy_o.max_sentence_length, "Longest sentence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*bv) {
    std::vector<fs::path> paths(bv_corpora.begin(), bv_corpora.end());
    const auto vocab = harness::cmd_build_vocab(paths, bv_out, bv_min_count, bv_max_size);
    std::cout << "vocabulary of " << vocab.size() << " tokens written to " << bv_out << '\n';
  } else if (*pd) {
    harness::RunConfig cfg = resolve(pd_c);
    if (!pd_corpus.empty()) cfg.data.corpus = pd_corpus;
    if (!pd_lexicon.empty()) cfg.data.lexicon = pd_lexicon;
    if (!pd_vocab.empty()) cfg.data.vocab = pd_vocab;
    const auto stats = harness::cmd_prepare_data(cfg, pd_out);
    std::cout << stats.examples << " examples written to " << pd_out << " (mask rate " << stats.mask_rate()
              << ", random rate " << stats.random_rate() << ")\n";
  } else if (*pt) {
    harness::RunConfig cfg = resolve(pt_c);
    if (!pt_examples.empty()) cfg.data.train_examples = pt_examples;
    if (!pt_out.empty()) cfg.output_dir = pt_out;
    if (pt_steps) cfg.total_steps = *pt_steps;
    if (!pt_init.empty()) cfg.init_from = pt_init;
    cfg.schedule.total_steps = cfg.total_steps;
    cfg.validate();
    std::optional<fs::path> resume;
    if (!pt_resume.empty()) resume = fs::path(pt_resume);
    const auto result = harness::cmd_pretrain(cfg, cfg.output_dir, resume);
    if (!result.records.empty())
      std::cout << "step " << result.records.back().step << " loss " << result.records.back().loss << '\n';
    std::cout << "checkpoint: " << result.final_checkpoint.string() << '\n';
  } else if (*ev) {
    write_json(ev_out, harness::cmd_eval(ev_ckpt, ev_examples));
  } else if (*ab) {
    harness::RunConfig cfg = resolve(ab_c);
    if (ab_steps) cfg.ablation.steps = *ab_steps;
    cfg.validate();
    const auto table = harness::cmd_ablate(cfg, ab_out);
    std::cout << table.to_tsv(cfg);
  } else if (*gc) {
    const harness::RunConfig cfg = resolve(gc_c);
    std::vector<posenc::Scheme> schemes{posenc::Scheme::None, posenc::Scheme::Pape, posenc::Scheme::Prpe,
                                        posenc::Scheme::Frpe};
    if (gc_c.scheme) schemes = {posenc::parse_scheme(*gc_c.scheme)};
    const auto outcomes = harness::cmd_gradcheck(schemes, cfg.seed);
    write_json(gc_out, harness::gradcheck_json(outcomes, cfg.seed));
    bool ok = true;
    for (const auto& o : outcomes) {
      std::fprintf(stderr, "%-5s %s  max relative error %.3e\n", posenc::to_string(o.scheme).c_str(),
                   o.passed ? "pass" : "FAIL", o.report.max_rel_error);
      if (!o.passed) {
        ok = false;
        auto params = o.report.params;
        std::sort(params.begin(), params.end(),
                  [](const auto& a, const auto& b) { return a.max_rel_error > b.max_rel_error; });
        for (std::size_t i = 0; i < params.size() && i < 5; ++i)
          std::fprintf(stderr, "    %-32s %.3e (coord %zu)\n", params[i].name.c_str(), params[i].max_rel_error,
                       params[i].worst_coord);
      }
    }
    if (!ok) return 2;
  } else if (*sy) {
    const auto corpus = harness::cmd_synth_corpus(sy_o, sy_out);
    std::cout << corpus.documents.size() << " documents written to " << sy_out << '\n';
  }
  return 0;
}

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const InvariantError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
