#include "deskbert/harness/commands.hpp"

#include <fstream>
#include <random>

#include "deskbert/data/examples_io.hpp"
#include "deskbert/error.hpp"
#include "deskbert/rng.hpp"

namespace deskbert::harness {

namespace fs = std::filesystem;
using nlohmann::json;

data::Vocabulary cmd_build_vocab(const std::vector<fs::path>& corpora, const fs::path& out, std::size_t min_count,
                                 std::size_t max_size) {
  data::Vocabulary vocab = data::build_vocab(corpora, min_count, max_size);
  vocab.save(out);
  return vocab;
}

data::PrepareStats cmd_prepare_data(const RunConfig& config, const fs::path& out) {
  if (config.data.corpus.empty()) throw UserError("prepare-data: data.corpus is not set");
  const auto documents = data::read_corpus(config.data.corpus);
  const data::Vocabulary vocab =
      config.data.vocab.empty()
          ? data::build_vocab({config.data.corpus}, config.data.min_count, config.data.max_vocab_size)
          : data::Vocabulary::load(config.data.vocab);
  data::Lexicon lexicon;
  if (!config.data.lexicon.empty()) lexicon = data::Lexicon::load(config.data.lexicon);
  const data::LexiconSegmenter segmenter(std::move(lexicon));

  data::PipelineOptions options;
  options.max_seq_len = config.encoder.max_seq_len;
  options.strategy = config.strategy;
  options.rates = config.masking;
  options.pairs.positive_probability = config.data.positive_probability;
  options.seed = config.seed;

  data::PrepareStats stats;
  const auto tokenized = data::tokenize_corpus(documents, vocab, segmenter);
  const auto examples = data::prepare_examples(tokenized, vocab.size(), options, &stats);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::write_examples(out, examples);

  json sidecar = stats.to_json();
  sidecar["strategy"] = data::to_string(config.strategy);
  sidecar["vocab_size"] = vocab.size();
  sidecar["config"] = to_json(config);
  sidecar["seed"] = config.seed;
  std::ofstream(out.string() + ".stats.json") << sidecar.dump(2) << '\n';
  return stats;
}

PretrainResult cmd_pretrain(const RunConfig& config, const fs::path& out_dir, const std::optional<fs::path>& resume) {
  if (config.data.train_examples.empty()) throw UserError("pretrain: data.train_examples is not set");
  return run_pretraining(config, data::read_examples(fs::path(config.data.train_examples)), out_dir, resume);
}

json cmd_eval(const fs::path& checkpoint, const fs::path& examples_path) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  encoder::EncoderModel model(ck.config.encoder, 0);
  restore_parameters(ck, model.params(), true);
  const auto examples = data::read_examples(examples_path);
  const EvalReport report = evaluate(model, examples);
  json j = report.to_json();
  j["checkpoint"] = checkpoint.string();
  j["examples_file"] = examples_path.string();
  j["step"] = ck.step;
  j["config"] = to_json(ck.config);
  j["seed"] = ck.config.seed;
  return j;
}

AblationTable cmd_ablate(const RunConfig& config, const fs::path& out_dir) {
  AblationTable table = run_ablation(config);
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "ablation.tsv") << table.to_tsv(config);
  std::ofstream(out_dir / "ablation.json") << table.to_json(config).dump(2) << '\n';
  return table;
}

encoder::EncoderConfig desk_gradcheck_config(posenc::Scheme scheme) {
  encoder::EncoderConfig c;
  c.vocab_size = 128;
  c.hidden_size = 64;
  c.num_layers = 2;
  c.num_heads = 2;
  c.ffn_size = 256;
  c.max_seq_len = 16;
  c.encoding.kind = scheme;
  c.encoding.max_position = 16;
  c.encoding.prpe_clip = 4;
  return c;
}

GradCheckReport gradcheck_model(const encoder::EncoderConfig& config, std::uint64_t seed, std::size_t length,
                                const GradCheckOptions& options) {
  if (length < 5) throw std::invalid_argument("gradcheck: length must be >= 5");
  encoder::EncoderConfig cfg = config;
  cfg.hidden_dropout = 0.0;
  cfg.attention_dropout = 0.0;
  encoder::EncoderModel model(cfg, seed);

  // [CLS] A [SEP] B [SEP] with a third of the content positions as targets.
  std::mt19937_64 rng(mix_seed(seed, 1));
  std::uniform_int_distribution<std::size_t> tok(data::Vocabulary::kNumSpecial, cfg.vocab_size - 1);
  const std::size_t len_a = (length - 3) / 2 + (length - 3) % 2;
  data::PretrainExample ex;
  for (std::size_t i = 0; i < length; ++i) {
    std::size_t id = tok(rng);
    if (i == 0) id = data::Vocabulary::kCls;
    if (i == len_a + 1 || i == length - 1) id = data::Vocabulary::kSep;
    ex.tokens.push_back(id);
    ex.segments.push_back(i <= len_a + 1 ? 0 : 1);
  }
  for (std::size_t i = 1; i + 1 < length; ++i) {
    if (i == len_a + 1 || i % 3 != 1) continue;
    ex.predict_positions.push_back(i);
    ex.predict_labels.push_back(tok(rng));
    ex.tokens[i] = data::Vocabulary::kMask;
  }
  ex.nsp_label = data::kNotNext;

  const LossFunction loss = [&](const ParameterStore& params, Gradients* grads) {
    Tape tape;
    const encoder::ForwardContext ctx{tape, model, params};
    const auto out = encoder::pretrain_forward(ctx, ex);
    const auto bundle = encoder::pretrain_loss(ctx, out, ex);
    if (grads) {
      tape.backward(bundle.total);
      tape.collect(params, *grads);
    }
    return bundle.total_value;
  };
  return check_gradients(loss, model.params(), options);
}

std::vector<GradcheckOutcome> cmd_gradcheck(const std::vector<posenc::Scheme>& schemes, std::uint64_t seed) {
  std::vector<GradcheckOutcome> out;
  for (const auto scheme : schemes) {
    GradcheckOutcome o;
    o.scheme = scheme;
    GradCheckOptions options;
    options.seed = mix_seed(seed, 2);
    options.extra_steps = {1e-3, 3e-3, 3e-5};
    o.report = gradcheck_model(desk_gradcheck_config(scheme), seed, 12, options);
    o.passed = o.report.passed(kGradcheckThreshold);
    out.push_back(std::move(o));
  }
  return out;
}

json gradcheck_json(const std::vector<GradcheckOutcome>& outcomes, std::uint64_t seed) {
  json j;
  j["seed"] = seed;
  j["threshold"] = kGradcheckThreshold;
  j["results"] = json::array();
  for (const auto& o : outcomes) {
    json r;
    r["scheme"] = posenc::to_string(o.scheme);
    r["passed"] = o.passed;
    r["max_rel_error"] = o.report.max_rel_error;
    r["config"] = {{"hidden_size", 64}, {"num_layers", 2}, {"num_heads", 2}, {"vocab_size", 128}, {"length", 12}};
    r["params"] = json::array();
    for (const auto& p : o.report.params)
      r["params"].push_back({{"name", p.name},
                             {"coords_checked", p.coords_checked},
                             {"max_rel_error", p.max_rel_error},
                             {"max_abs_grad", p.max_abs_grad},
                             {"worst_coord", p.worst_coord}});
    j["results"].push_back(r);
  }
  return j;
}

data::SyntheticCorpus cmd_synth_corpus(const data::SyntheticOptions& options, const fs::path& out_dir) {
  data::SyntheticCorpus corpus = data::make_synthetic_corpus(options);
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "corpus.txt", std::ios::binary) << data::corpus_text(corpus.documents);
  corpus.lexicon.save(out_dir / "lexicon.txt");
  return corpus;
}

}  // namespace deskbert::harness
