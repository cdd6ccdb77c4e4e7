#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "deskbert/data/examples_io.hpp"
#include "deskbert/data/pipeline.hpp"
#include "deskbert/data/synthetic.hpp"
#include "deskbert/error.hpp"
#include "deskbert/harness/checkpoint.hpp"
#include "deskbert/harness/commands.hpp"
#include "deskbert/harness/config.hpp"
#include "deskbert/harness/metrics.hpp"
#include "deskbert/harness/offset_copy.hpp"
#include "deskbert/harness/trainer.hpp"

using namespace deskbert;
using namespace deskbert::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("deskbert_test_harness_" + std::to_string(::getpid())) / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

constexpr std::size_t kSymbols = 24;

std::vector<data::PretrainExample> synthetic_examples(std::size_t docs, std::size_t max_len, std::uint64_t seed) {
  data::SyntheticOptions o;
  o.num_symbols = kSymbols;
  o.num_documents = docs;
  o.seed = seed;
  const auto corpus = data::make_synthetic_corpus(o);
  const auto vocab = data::synthetic_vocabulary(kSymbols);
  const auto tok = data::tokenize_corpus(corpus.documents, vocab, data::LexiconSegmenter(corpus.lexicon));
  data::PipelineOptions p;
  p.max_seq_len = max_len;
  p.seed = seed;
  return data::prepare_examples(tok, vocab.size(), p);
}

RunConfig small_config(std::uint64_t steps) {
  RunConfig c;
  c.encoder.vocab_size = data::Vocabulary::kNumSpecial + kSymbols;
  c.encoder.hidden_size = 32;
  c.encoder.num_layers = 1;
  c.encoder.num_heads = 2;
  c.encoder.ffn_size = 64;
  c.encoder.max_seq_len = 32;
  c.encoder.encoding.kind = posenc::Scheme::Frpe;
  c.batch_size = 8;
  c.total_steps = steps;
  const std::uint64_t warmup = std::clamp<std::uint64_t>(steps / 2, 1, 25);
  c.schedule = {optim::ScheduleKind::LinearWarmupLinearDecay, 1e-2, warmup, steps, 1.0};
  c.seed = 3;
  return c;
}

double mean_loss(const std::vector<MetricsRecord>& r, std::size_t from, std::size_t count) {
  double s = 0;
  for (std::size_t i = from; i < from + count; ++i) s += r[i].loss;
  return s / double(count);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DESKBERT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

void write_config(const fs::path& path, const RunConfig& c) { std::ofstream(path) << to_json(c).dump(2); }

}  // namespace

TEST_CASE("config JSON round trip and strict keys") {
  for (const auto& name : preset_names()) {
    const RunConfig c = preset(name);
    CHECK_NOTHROW(c.validate());
    CHECK(to_json(run_config_from_json(to_json(c))) == to_json(c));
  }
  for (const char* expected : {"desk", "toy-mlm", "base", "large"}) {
    const auto names = preset_names();
    CHECK(std::find(names.begin(), names.end(), expected) != names.end());
  }
  CHECK_THROWS_AS(preset("huge"), std::invalid_argument);

  json j = to_json(preset("desk"));
  j["batch_sise"] = 3;
  CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);
  j = to_json(preset("desk"));
  j["encoder"]["hidden"] = 3;
  CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);
  j = to_json(preset("desk"));
  j["encoder"]["hidden_size"] = "big";
  CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);

  // Absent keys keep defaults.
  const RunConfig partial = run_config_from_json(json{{"seed", 17}});
  CHECK(partial.seed == 17);
  CHECK(partial.batch_size == RunConfig{}.batch_size);

  RunConfig bad = preset("desk");
  bad.encoder.num_heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = preset("desk");
  bad.masking.mask = 0.99;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  const fs::path dir = fresh_dir("config");
  std::ofstream(dir / "broken.json") << "{";
  CHECK_THROWS_AS(load_run_config(dir / "broken.json"), UserError);
}

TEST_CASE("checkpoint round trip, corruption and shape mismatch") {
  const RunConfig cfg = small_config(5);
  Trainer trainer(cfg, synthetic_examples(16, 32, 1));
  for (int i = 0; i < 5; ++i) trainer.train_step();
  const fs::path dir = fresh_dir("ckpt") / "c";
  save_checkpoint(dir, cfg, trainer.model().params(), trainer.optimizer(), trainer.step(), json::object());

  const Checkpoint ck = load_checkpoint(dir);
  CHECK(ck.step == 5);
  CHECK(to_json(ck.config) == to_json(cfg));
  REQUIRE(ck.names.size() == trainer.model().params().size());
  for (std::size_t i = 0; i < ck.names.size(); ++i) {
    const auto& p = trainer.model().params()[i];
    CHECK(ck.names[i] == p.name);
    CHECK(ck.master[i] == p.value);
    for (std::size_t k = 0; k < p.value.size(); ++k)
      CHECK(ck.stored[i][k] == double(static_cast<float>(p.value[k])));
    CHECK(ck.optimizer.m[i] == trainer.optimizer().m[i]);
    CHECK(ck.optimizer.v[i] == trainer.optimizer().v[i]);
  }
  CHECK(ck.optimizer.step == trainer.optimizer().step);

  encoder::EncoderModel fresh(cfg.encoder, 99);
  restore_parameters(ck, fresh.params());
  for (std::size_t i = 0; i < ck.names.size(); ++i) CHECK(fresh.params()[i].value == ck.master[i]);

  RunConfig wider = cfg;
  wider.encoder.hidden_size = 24;
  encoder::EncoderModel other(wider.encoder, 1);
  std::string first_mismatch;
  for (std::size_t i = 0; i < ck.names.size() && first_mismatch.empty(); ++i)
    if (!other.params()[i].value.same_shape(ck.stored[i])) first_mismatch = ck.names[i];
  REQUIRE_FALSE(first_mismatch.empty());
  try {
    restore_parameters(ck, other.params());
    FAIL("expected a shape error");
  } catch (const UserError& e) {
    CHECK(std::string(e.what()).find(first_mismatch) != std::string::npos);
  }

  const fs::path params = dir / "params.bin";
  fs::resize_file(params, fs::file_size(params) - 4);
  CHECK_THROWS_AS(load_checkpoint(dir), UserError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), UserError);
}

TEST_CASE("metrics log") {
  const fs::path dir = fresh_dir("metrics");
  {
    MetricsWriter w(dir / "m.jsonl", json{{"config", 1}, {"seed", 2}});
    w.write({1, 2.0, 1.5, 0.5, 0.1, 1e-3, false, std::nullopt});
    w.write({2, 1.9, 1.4, 0.5, 0.2, 2e-3, true, 0.25});
    CHECK_THROWS_AS(w.write({2, 1.0, 1.0, 0.0, 0.0, 0.0, false, std::nullopt}), InvariantError);
  }
  const auto log = read_metrics(dir / "m.jsonl");
  CHECK(log.header["seed"] == 2);
  REQUIRE(log.records.size() == 2);
  CHECK(log.records[1].skipped);
  CHECK(log.records[1].wall_time == 0.25);
  CHECK_FALSE(log.records[0].wall_time.has_value());
}

TEST_CASE("zero-step run writes the initial checkpoint and no records") {
  const fs::path out = fresh_dir("zero");
  const RunConfig cfg = small_config(0);
  const auto result = run_pretraining(cfg, {}, out);
  CHECK(result.records.empty());
  const Checkpoint ck = load_checkpoint(result.final_checkpoint);
  CHECK(ck.step == 0);
  const Trainer init(cfg, {});
  for (std::size_t i = 0; i < ck.names.size(); ++i) CHECK(ck.master[i] == init.model().params()[i].value);
  CHECK(read_metrics(out / "metrics.jsonl").records.empty());
}

TEST_CASE("training lowers the loss and resumes exactly") {
  const auto examples = synthetic_examples(64, 32, 2);
  RunConfig cfg = small_config(500);
  cfg.checkpoint_every = 100;
  const fs::path out = fresh_dir("train");
  const auto full = run_pretraining(cfg, examples, out / "full");
  REQUIRE(full.records.size() == 500);
  for (std::size_t i = 0; i < full.records.size(); ++i) {
    CHECK(full.records[i].step == i + 1);
    CHECK(std::isfinite(full.records[i].loss));
  }
  CHECK(mean_loss(full.records, 450, 50) < mean_loss(full.records, 0, 50) - 0.3);

  // Same config, same seed: the log is reproduced exactly.
  const auto again = run_pretraining(cfg, examples, out / "again");
  CHECK(again.records == full.records);

  const auto resumed = run_pretraining(cfg, examples, out / "resumed", checkpoint_dir(out / "full", 100));
  REQUIRE(resumed.records.size() == 400);
  for (std::size_t i = 0; i < 100; ++i) CHECK(resumed.records[i] == full.records[100 + i]);
  const auto a = load_checkpoint(full.final_checkpoint), b = load_checkpoint(resumed.final_checkpoint);
  for (std::size_t i = 0; i < a.names.size(); ++i) CHECK(a.master[i] == b.master[i]);
}

TEST_CASE("a model overfits a handful of examples") {
  auto examples = synthetic_examples(8, 32, 4);
  examples.resize(4);
  RunConfig cfg = small_config(600);
  cfg.optimizer.weight_decay = 0.0;
  const fs::path out = fresh_dir("overfit");
  const auto result = run_pretraining(cfg, examples, out);
  const auto ck = load_checkpoint(result.final_checkpoint);
  encoder::EncoderModel model(cfg.encoder, 0);
  restore_parameters(ck, model.params());
  const EvalReport r = evaluate(model, examples);
  CHECK(r.mlm_count > 0);
  CHECK(r.mlm_accuracy() > 0.9);
  CHECK(r.nsp_accuracy() > 0.9);
}

TEST_CASE("evaluation: longer inputs under FRPE and empty files") {
  const fs::path dir = fresh_dir("eval");
  RunConfig cfg = small_config(20);
  const auto result = run_pretraining(cfg, synthetic_examples(16, 32, 5), dir / "run");

  const auto longer = synthetic_examples(16, 64, 6);
  std::size_t max_len = 0;
  for (const auto& e : longer) max_len = std::max(max_len, e.length());
  CHECK(max_len > 32);
  data::write_examples(dir / "long.jsonl", longer);
  const json report = cmd_eval(result.final_checkpoint, dir / "long.jsonl");
  CHECK(report["examples"] == longer.size());
  CHECK(std::isfinite(report["mlm_loss"].get<double>()));

  std::ofstream(dir / "empty.jsonl").close();
  const json empty = cmd_eval(result.final_checkpoint, dir / "empty.jsonl");
  CHECK(empty["examples"] == 0);
  CHECK(empty["mlm_count"] == 0);
  CHECK(empty["nsp_count"] == 0);

  // Provenance travels with every output.
  CHECK(report["seed"] == cfg.seed);
  CHECK(report["config"] == to_json(load_checkpoint(result.final_checkpoint).config));
  const auto log = read_metrics(dir / "run" / "metrics.jsonl");
  CHECK(log.header["config"] == to_json(cfg));
  CHECK(log.header["seed"] == cfg.seed);
  for (const auto& r : log.records) CHECK_FALSE(r.wall_time.has_value());
}

TEST_CASE("prepare-data sidecar and mask rates on ten thousand examples") {
  const fs::path dir = fresh_dir("prepare");
  data::SyntheticOptions o;
  o.num_documents = 1500;
  cmd_synth_corpus(o, dir);
  RunConfig cfg = preset("desk");
  cfg.data.corpus = (dir / "corpus.txt").string();
  cfg.data.lexicon = (dir / "lexicon.txt").string();
  cfg.seed = 21;
  REQUIRE(fs::exists(cfg.data.corpus));
  REQUIRE(fs::exists(cfg.data.lexicon));
  const auto stats = cmd_prepare_data(cfg, dir / "train.jsonl");
  CHECK(stats.examples >= 10000);
  CHECK(std::abs(stats.mask_rate() - 0.12) < 0.005);
  CHECK(std::abs(stats.random_rate() - 0.015) < 0.002);
  CHECK(std::abs(stats.keep_rate() - 0.015) < 0.002);
  CHECK(std::abs(stats.nsp_positive_fraction() - 0.5) < 0.02);
  CHECK(data::read_examples(dir / "train.jsonl").size() == stats.examples);

  json side;
  std::ifstream(dir / "train.jsonl.stats.json") >> side;
  CHECK(side["seed"] == 21);
  CHECK(side["config"] == to_json(cfg));
  CHECK(side["examples"] == stats.examples);
  const auto hist = side["mask_rate_histogram"]["counts"];
  CHECK(std::accumulate(hist.begin(), hist.end(), std::size_t{0},
                        [](std::size_t s, const json& v) { return s + v.get<std::size_t>(); }) == stats.examples);
}

TEST_CASE("ablation grid") {
  RunConfig cfg = preset("desk");
  cfg.ablation.schemes = {posenc::Scheme::Frpe};
  cfg.ablation.strategies = {data::MaskStrategy::Char};
  cfg.ablation.steps = 20;
  cfg.ablation.warmup_steps = 5;
  cfg.ablation.eval_examples = 10;
  const fs::path dir = fresh_dir("ablate");
  const auto table = cmd_ablate(cfg, dir);
  REQUIRE(table.cells.size() == 1);
  CHECK(table.cells[0].accuracy_eval_length.has_value());
  CHECK(table.cells[0].eval_status == "ok");
  std::ifstream tsv(dir / "ablation.tsv");
  std::size_t lines = 0;
  for (std::string line; std::getline(tsv, line);)
    if (!line.empty() && line[0] != '#') ++lines;
  CHECK(lines == 2);  // header + one row
  json j;
  std::ifstream(dir / "ablation.json") >> j;
  CHECK(j["config"] == to_json(cfg));
  CHECK(j["seed"] == cfg.seed);

  const auto pape = run_offset_copy_cell(cfg, posenc::Scheme::Pape, data::MaskStrategy::Char);
  CHECK_FALSE(pape.accuracy_eval_length.has_value());
  CHECK(pape.eval_status != "ok");
  CHECK(pape.max_position == cfg.ablation.sl_train);
}

TEST_CASE("offset-copy examples") {
  OffsetCopyTask task;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto e = make_offset_copy_example(task, 32, rng);
    CHECK_NOTHROW(data::validate_example(e, task.vocab_size()));
    CHECK(e.length() == 32);
    const std::set<std::size_t> marked(e.predict_positions.begin(), e.predict_positions.end());
    for (std::size_t k = 0; k < e.predict_positions.size(); ++k) {
      const long src = long(e.predict_positions[k]) + task.offset;
      REQUIRE(src >= 1);
      CHECK(e.tokens[std::size_t(src)] == e.predict_labels[k]);
      CHECK_FALSE(marked.contains(std::size_t(src)));
    }
  }
}

TEST_CASE("CLI exit codes") {
  const fs::path dir = fresh_dir("cli");
  CHECK(run_cli("synth-corpus --out " + (dir / "corpus").string() + " --documents 16") == 0);
  CHECK(run_cli("build-vocab --corpus " + (dir / "corpus" / "corpus.txt").string() + " --out " +
                (dir / "vocab.txt").string()) == 0);
  CHECK(run_cli("eval --checkpoint " + (dir / "nowhere").string() + " --examples x.jsonl") == 1);
  CHECK(run_cli("pretrain --preset nonexistent --examples x.jsonl") == 1);

  RunConfig cfg = small_config(3);
  cfg.encoder.vocab_size = data::synthetic_vocabulary(200).size();
  cfg.data.corpus = (dir / "corpus" / "corpus.txt").string();
  write_config(dir / "ok.json", cfg);
  CHECK(run_cli("prepare-data --config " + (dir / "ok.json").string() + " --out " + (dir / "t.jsonl").string()) == 0);
  CHECK(run_cli("pretrain --config " + (dir / "ok.json").string() + " --examples " + (dir / "t.jsonl").string() +
                " --out " + (dir / "run").string()) == 0);

  // A loss scale far past binary16 range with skipping disabled is an
  // internal failure, not a user error.
  cfg.precision.mode = optim::PrecisionMode::MixedEmulated;
  cfg.precision.loss_scale = std::ldexp(1.0, 60);
  cfg.precision.skip_on_overflow = false;
  write_config(dir / "overflow.json", cfg);
  CHECK(run_cli("pretrain --config " + (dir / "overflow.json").string() + " --examples " +
                (dir / "t.jsonl").string() + " --out " + (dir / "run2").string()) == 2);
}
