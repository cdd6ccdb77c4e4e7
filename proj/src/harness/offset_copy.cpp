#include "deskbert/harness/offset_copy.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "deskbert/data/vocab.hpp"
#include "deskbert/harness/trainer.hpp"
#include "deskbert/rng.hpp"

namespace deskbert::harness {

using data::Vocabulary;

std::size_t OffsetCopyTask::vocab_size() const { return Vocabulary::kNumSpecial + num_symbols; }

namespace {

// About a fifth of all symbol bigrams are "words" for whole-word marking.
bool is_word(std::size_t a, std::size_t b) { return (7 * a + b) % 5 == 0; }

std::vector<data::Span> symbol_words(const std::vector<std::size_t>& symbols, std::size_t first, std::size_t last) {
  std::vector<data::Span> spans;
  std::size_t i = first;
  while (i < last) {
    if (i + 1 < last && is_word(symbols[i], symbols[i + 1])) {
      spans.push_back({i, i + 2});
      i += 2;
    } else {
      spans.push_back({i, i + 1});
      ++i;
    }
  }
  return spans;
}

}  // namespace

data::PretrainExample make_offset_copy_example(const OffsetCopyTask& task, std::size_t length, std::mt19937_64& rng) {
  if (length < 3) throw std::invalid_argument("offset-copy sequences need length >= 3");
  std::uniform_int_distribution<std::size_t> sym(0, task.num_symbols - 1);
  std::vector<std::size_t> symbols(length, 0);
  data::PretrainExample e;
  e.tokens.assign(length, 0);
  e.tokens.front() = Vocabulary::kCls;
  e.tokens.back() = Vocabulary::kSep;
  for (std::size_t i = 1; i + 1 < length; ++i) {
    symbols[i] = sym(rng);
    e.tokens[i] = Vocabulary::kNumSpecial + symbols[i];
  }
  e.segments.assign(length, 0);
  e.nsp_label = data::kNoNspLabel;

  const auto spans = symbol_words(symbols, 1, length - 1);
  const data::MaskingRates rates{task.mark_rate, 0.0, 0.0};
  const data::MaskingPlan plan = data::select_targets(length, spans, task.strategy, rng, rates);
  std::vector<bool> marked(length, false);
  for (const auto& t : plan.targets) marked[t.position] = true;
  const std::vector<std::size_t> original = e.tokens;
  for (const auto& t : plan.targets) {
    e.tokens[t.position] = Vocabulary::kMask;
    const long src = static_cast<long>(t.position) + task.offset;
    if (src < 1 || src > static_cast<long>(length) - 2 || marked[static_cast<std::size_t>(src)]) continue;
    e.predict_positions.push_back(t.position);
    e.predict_labels.push_back(original[static_cast<std::size_t>(src)]);
  }
  return e;
}

std::vector<data::PretrainExample> make_offset_copy_set(const OffsetCopyTask& task, std::size_t length,
                                                        std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<data::PretrainExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_offset_copy_example(task, length, rng));
  return out;
}

std::string CellResult::label(std::size_t sl_train) const {
  std::string s = posenc::to_string(scheme);
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (strategy == data::MaskStrategy::Wwm) s += ", WWM";
  return "offset-copy, " + s + ", SL:" + std::to_string(sl_train);
}

nlohmann::json CellResult::to_json() const {
  nlohmann::json j;
  j["scheme"] = posenc::to_string(scheme);
  j["strategy"] = data::to_string(strategy);
  j["max_position"] = max_position;
  j["final_loss"] = final_loss;
  j["accuracy_train_length"] = accuracy_train_length;
  j["accuracy_eval_length"] = accuracy_eval_length ? nlohmann::json(*accuracy_eval_length) : nlohmann::json(nullptr);
  j["eval_status"] = eval_status;
  return j;
}

CellResult run_offset_copy_cell(const RunConfig& config, posenc::Scheme scheme, data::MaskStrategy strategy,
                                std::optional<std::size_t> max_position) {
  const AblationConfig& a = config.ablation;
  OffsetCopyTask task{a.num_symbols, a.offset, a.mark_rate, strategy};

  RunConfig cell = config;
  auto& enc = cell.encoder;
  enc.vocab_size = task.vocab_size();
  enc.hidden_size = a.hidden_size;
  enc.num_layers = a.num_layers;
  enc.num_heads = a.num_heads;
  enc.ffn_size = a.ffn_size;
  enc.max_seq_len = a.sl_train;
  enc.hidden_dropout = 0.0;
  enc.attention_dropout = 0.0;
  enc.add_absolute_input_embeddings = false;
  enc.encoding.kind = scheme;
  enc.encoding.prpe_clip = a.prpe_clip;
  enc.encoding.max_position = max_position ? *max_position : (a.pape_max_position ? a.pape_max_position : a.sl_train);
  cell.batch_size = a.batch_size;
  cell.total_steps = a.steps;
  cell.schedule = {optim::ScheduleKind::LinearWarmupLinearDecay, a.lr_max, a.warmup_steps, a.steps, 1.0};
  cell.precision.mode = optim::PrecisionMode::Full;
  cell.log_wall_time = false;
  cell.init_from.clear();

  // Data depends on the strategy only, so schemes see identical samples.
  const std::uint64_t data_seed = mix_seed(config.seed, strategy == data::MaskStrategy::Char ? 11 : 12);
  const std::size_t pool = std::max<std::size_t>(1, std::min<std::size_t>(a.steps * a.batch_size, 20000));
  Trainer trainer(cell, make_offset_copy_set(task, a.sl_train, pool, mix_seed(data_seed, 0)));

  CellResult r;
  r.scheme = scheme;
  r.strategy = strategy;
  r.max_position = enc.encoding.max_position;
  double tail = 0.0;
  std::size_t tail_n = 0;
  while (trainer.step() < cell.total_steps) {
    const MetricsRecord m = trainer.train_step();
    if (m.step + 50 > cell.total_steps) {
      tail += m.loss;
      ++tail_n;
    }
  }
  r.final_loss = tail_n ? tail / double(tail_n) : 0.0;

  const auto at_train = make_offset_copy_set(task, a.sl_train, a.eval_examples, mix_seed(data_seed, 1));
  r.accuracy_train_length = evaluate(trainer.model(), at_train).mlm_accuracy();
  const auto at_eval = make_offset_copy_set(task, a.sl_eval, a.eval_examples, mix_seed(data_seed, 2));
  try {
    r.accuracy_eval_length = evaluate(trainer.model(), at_eval).mlm_accuracy();
    r.eval_status = "ok";
  } catch (const std::out_of_range& e) {
    r.eval_status = std::string("fail/out-of-range: ") + e.what();
  }
  return r;
}

AblationTable run_ablation(const RunConfig& config) {
  AblationTable table;
  for (const auto scheme : config.ablation.schemes)
    for (const auto strategy : config.ablation.strategies)
      table.cells.push_back(run_offset_copy_cell(config, scheme, strategy));
  return table;
}

nlohmann::json AblationTable::to_json(const RunConfig& config) const {
  nlohmann::json j;
  j["config"] = harness::to_json(config);
  j["seed"] = config.seed;
  j["task"] = {{"name", "offset-copy"},
               {"offset", config.ablation.offset},
               {"sl_train", config.ablation.sl_train},
               {"sl_eval", config.ablation.sl_eval}};
  j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    auto cj = c.to_json();
    cj["model"] = c.label(config.ablation.sl_train);
    j["cells"].push_back(cj);
  }
  return j;
}

std::string AblationTable::to_tsv(const RunConfig& config) const {
  std::ostringstream out;
  out << "# config: " << harness::to_json(config).dump() << '\n';
  out << "# seed: " << config.seed << '\n';
  const std::string train_col = "acc@SL" + std::to_string(config.ablation.sl_train);
  const std::string eval_col = "acc@SL" + std::to_string(config.ablation.sl_eval);
  out << "model\tscheme\tmasking\t" << train_col << '\t' << eval_col << "\tfinal_loss\n";
  char buf[64];
  for (const auto& c : cells) {
    out << c.label(config.ablation.sl_train) << '\t' << posenc::to_string(c.scheme) << '\t'
        << data::to_string(c.strategy) << '\t';
    std::snprintf(buf, sizeof buf, "%.4f", c.accuracy_train_length);
    out << buf << '\t';
    if (c.accuracy_eval_length) {
      std::snprintf(buf, sizeof buf, "%.4f", *c.accuracy_eval_length);
      out << buf;
    } else {
      out << "fail/out-of-range";
    }
    std::snprintf(buf, sizeof buf, "%.6f", c.final_loss);
    out << '\t' << buf << '\n';
  }
  return out.str();
}

}  // namespace deskbert::harness
