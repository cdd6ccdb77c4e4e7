#include "deskbert/harness/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "deskbert/error.hpp"

namespace deskbert::harness {

using nlohmann::json;

namespace {

// Reads known keys of one JSON object and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned() && !(it->is_number_integer() && it->template get<long long>() >= 0))
          throw std::invalid_argument("expected a non-negative integer");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw std::invalid_argument("expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw std::invalid_argument("expected a string");
      }
      out = it->get<T>();
    } catch (const std::exception& e) {
      throw std::invalid_argument("config: '" + path_ + "." + key + "': " + e.what());
    }
  }

  template <typename T, typename Parse>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string name;
    bool present = j_.contains(key);
    get(key, name);
    if (!present) return;
    try {
      out = parse(name);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config: '" + path_ + "." + key + "': " + e.what());
    }
  }

  template <typename T, typename Parse>
  void get_enum_list(const char* key, std::vector<T>& out, Parse parse) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array()) throw std::invalid_argument("config: '" + path_ + "." + key + "' must be an array");
    out.clear();
    for (const auto& v : *it) {
      if (!v.is_string()) throw std::invalid_argument("config: '" + path_ + "." + key + "' must hold strings");
      try {
        out.push_back(parse(v.get<std::string>()));
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config: '" + path_ + "." + key + "': " + e.what());
      }
    }
  }

  Reader child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    static const json empty = json::object();
    return Reader(it == j_.end() ? empty : *it, path_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.contains(key)) throw std::invalid_argument("config: unknown key '" + path_ + "." + key + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T, typename F>
json names(const std::vector<T>& values, F name) {
  json out = json::array();
  for (const auto& v : values) out.push_back(name(v));
  return out;
}

}  // namespace

void RunConfig::validate() const {
  encoder.validate();
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (total_steps > 0) {
    optim::LrSchedule s = schedule;
    s.total_steps = total_steps;
    s.validate();
  }
  precision.validate();
  optimizer.validate();
  if (masking.mask < 0 || masking.random_replace < 0 || masking.keep < 0 || masking.total() > 1.0)
    throw std::invalid_argument("masking rates must be non-negative and sum to at most 1");
  if (!(data.positive_probability >= 0.0 && data.positive_probability <= 1.0))
    throw std::invalid_argument("data.positive_probability must be in [0, 1]");
  const auto& a = ablation;
  if (a.sl_train < 5 || a.sl_eval < a.sl_train)
    throw std::invalid_argument("ablation needs sl_train >= 5 and sl_eval >= sl_train");
  if (a.offset == 0) throw std::invalid_argument("ablation.offset must be nonzero");
  if (a.num_symbols < 2) throw std::invalid_argument("ablation.num_symbols must be >= 2");
  if (!(a.mark_rate > 0.0 && a.mark_rate < 1.0)) throw std::invalid_argument("ablation.mark_rate must be in (0, 1)");
  if (a.steps > 0 && (a.warmup_steps == 0 || a.warmup_steps >= a.steps))
    throw std::invalid_argument("ablation needs 0 < warmup_steps < steps");
  if (a.batch_size == 0 || a.eval_examples == 0) throw std::invalid_argument("ablation batch/eval sizes must be >= 1");
  if (a.schemes.empty() || a.strategies.empty()) throw std::invalid_argument("ablation grid is empty");
}

json to_json(const RunConfig& c) {
  json j;
  const auto& e = c.encoder;
  j["encoder"] = {{"vocab_size", e.vocab_size},
                  {"hidden_size", e.hidden_size},
                  {"num_layers", e.num_layers},
                  {"num_heads", e.num_heads},
                  {"ffn_size", e.ffn_size},
                  {"max_seq_len", e.max_seq_len},
                  {"type_vocab_size", e.type_vocab_size},
                  {"scheme", posenc::to_string(e.encoding.kind)},
                  {"prpe_clip", e.encoding.prpe_clip},
                  {"max_position", e.encoding.max_position},
                  {"add_absolute_input_embeddings", e.add_absolute_input_embeddings},
                  {"hidden_dropout", e.hidden_dropout},
                  {"attention_dropout", e.attention_dropout},
                  {"layer_norm_eps", e.layer_norm_eps},
                  {"init_std", e.init_std}};
  j["data"] = {{"corpus", c.data.corpus},
               {"lexicon", c.data.lexicon},
               {"vocab", c.data.vocab},
               {"train_examples", c.data.train_examples},
               {"eval_examples", c.data.eval_examples},
               {"min_count", c.data.min_count},
               {"max_vocab_size", c.data.max_vocab_size},
               {"positive_probability", c.data.positive_probability}};
  j["masking"] = {{"strategy", data::to_string(c.strategy)},
                  {"mask_rate", c.masking.mask},
                  {"random_replace_rate", c.masking.random_replace},
                  {"keep_rate", c.masking.keep}};
  j["schedule"] = {{"kind", optim::to_string(c.schedule.kind)},
                   {"lr_max", c.schedule.lr_max},
                   {"warmup_steps", c.schedule.warmup_steps},
                   {"power", c.schedule.power}};
  j["precision"] = {{"mode", optim::to_string(c.precision.mode)},
                    {"loss_scale", c.precision.loss_scale},
                    {"skip_on_overflow", c.precision.skip_on_overflow}};
  j["optimizer"] = {{"kind", optim::to_string(c.optimizer.kind)},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"exclude_exempt", c.optimizer.exclude_exempt}};
  j["batch_size"] = c.batch_size;
  j["total_steps"] = c.total_steps;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["checkpoint_every"] = c.checkpoint_every;
  j["log_wall_time"] = c.log_wall_time;
  j["init_from"] = c.init_from;
  j["global_batch_size"] = c.global_batch_size;
  const auto& a = c.ablation;
  j["ablation"] = {
      {"schemes", names(a.schemes, [](posenc::Scheme s) { return posenc::to_string(s); })},
      {"strategies", names(a.strategies, [](data::MaskStrategy s) { return data::to_string(s); })},
      {"sl_train", a.sl_train},
      {"sl_eval", a.sl_eval},
      {"offset", a.offset},
      {"num_symbols", a.num_symbols},
      {"mark_rate", a.mark_rate},
      {"hidden_size", a.hidden_size},
      {"num_layers", a.num_layers},
      {"num_heads", a.num_heads},
      {"ffn_size", a.ffn_size},
      {"prpe_clip", a.prpe_clip},
      {"pape_max_position", a.pape_max_position},
      {"steps", a.steps},
      {"batch_size", a.batch_size},
      {"lr_max", a.lr_max},
      {"warmup_steps", a.warmup_steps},
      {"eval_examples", a.eval_examples}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Reader root(j, "config");
  {
    Reader r = root.child("encoder");
    auto& e = c.encoder;
    r.get("vocab_size", e.vocab_size);
    r.get("hidden_size", e.hidden_size);
    r.get("num_layers", e.num_layers);
    r.get("num_heads", e.num_heads);
    r.get("ffn_size", e.ffn_size);
    r.get("max_seq_len", e.max_seq_len);
    r.get("type_vocab_size", e.type_vocab_size);
    r.get_enum("scheme", e.encoding.kind, posenc::parse_scheme);
    r.get("prpe_clip", e.encoding.prpe_clip);
    r.get("max_position", e.encoding.max_position);
    r.get("add_absolute_input_embeddings", e.add_absolute_input_embeddings);
    r.get("hidden_dropout", e.hidden_dropout);
    r.get("attention_dropout", e.attention_dropout);
    r.get("layer_norm_eps", e.layer_norm_eps);
    r.get("init_std", e.init_std);
    r.finish();
  }
  {
    Reader r = root.child("data");
    r.get("corpus", c.data.corpus);
    r.get("lexicon", c.data.lexicon);
    r.get("vocab", c.data.vocab);
    r.get("train_examples", c.data.train_examples);
    r.get("eval_examples", c.data.eval_examples);
    r.get("min_count", c.data.min_count);
    r.get("max_vocab_size", c.data.max_vocab_size);
    r.get("positive_probability", c.data.positive_probability);
    r.finish();
  }
  {
    Reader r = root.child("masking");
    r.get_enum("strategy", c.strategy, data::parse_strategy);
    r.get("mask_rate", c.masking.mask);
    r.get("random_replace_rate", c.masking.random_replace);
    r.get("keep_rate", c.masking.keep);
    r.finish();
  }
  {
    Reader r = root.child("schedule");
    r.get_enum("kind", c.schedule.kind, optim::parse_schedule_kind);
    r.get("lr_max", c.schedule.lr_max);
    r.get("warmup_steps", c.schedule.warmup_steps);
    r.get("power", c.schedule.power);
    r.finish();
  }
  {
    Reader r = root.child("precision");
    r.get_enum("mode", c.precision.mode, optim::parse_precision_mode);
    r.get("loss_scale", c.precision.loss_scale);
    r.get("skip_on_overflow", c.precision.skip_on_overflow);
    r.finish();
  }
  {
    Reader r = root.child("optimizer");
    r.get_enum("kind", c.optimizer.kind, optim::parse_optimizer_kind);
    r.get("beta1", c.optimizer.beta1);
    r.get("beta2", c.optimizer.beta2);
    r.get("epsilon", c.optimizer.epsilon);
    r.get("weight_decay", c.optimizer.weight_decay);
    r.get("exclude_exempt", c.optimizer.exclude_exempt);
    r.finish();
  }
  root.get("batch_size", c.batch_size);
  root.get("total_steps", c.total_steps);
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.get("checkpoint_every", c.checkpoint_every);
  root.get("log_wall_time", c.log_wall_time);
  root.get("init_from", c.init_from);
  root.get("global_batch_size", c.global_batch_size);
  {
    Reader r = root.child("ablation");
    auto& a = c.ablation;
    r.get_enum_list("schemes", a.schemes, posenc::parse_scheme);
    r.get_enum_list("strategies", a.strategies, data::parse_strategy);
    r.get("sl_train", a.sl_train);
    r.get("sl_eval", a.sl_eval);
    r.get("offset", a.offset);
    r.get("num_symbols", a.num_symbols);
    r.get("mark_rate", a.mark_rate);
    r.get("hidden_size", a.hidden_size);
    r.get("num_layers", a.num_layers);
    r.get("num_heads", a.num_heads);
    r.get("ffn_size", a.ffn_size);
    r.get("prpe_clip", a.prpe_clip);
    r.get("pape_max_position", a.pape_max_position);
    r.get("steps", a.steps);
    r.get("batch_size", a.batch_size);
    r.get("lr_max", a.lr_max);
    r.get("warmup_steps", a.warmup_steps);
    r.get("eval_examples", a.eval_examples);
    r.finish();
  }
  root.finish();
  c.schedule.total_steps = c.total_steps;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UserError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw UserError(path.string() + ": " + e.what());
  }
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.schedule.total_steps = c.total_steps;
  if (name == "desk") return c;
  if (name == "toy-mlm") {
    c.encoder.vocab_size = 256;
    c.encoder.hidden_size = 32;
    c.encoder.num_layers = 1;
    c.encoder.num_heads = 2;
    c.encoder.ffn_size = 64;
    c.encoder.max_seq_len = 32;
    c.encoder.encoding.kind = posenc::Scheme::Frpe;
    c.batch_size = 8;
    c.total_steps = 2000;
    c.schedule = {optim::ScheduleKind::LinearWarmupLinearDecay, 1e-2, 100, 2000, 1.0};
    return c;
  }
  if (name == "base" || name == "large") {
    const bool base = name == "base";
    c.encoder.vocab_size = 21128;
    c.encoder.hidden_size = base ? 768 : 1024;
    c.encoder.num_layers = base ? 12 : 24;
    c.encoder.num_heads = base ? 12 : 16;
    c.encoder.ffn_size = 4 * c.encoder.hidden_size;
    c.encoder.max_seq_len = 128;
    c.encoder.hidden_dropout = 0.1;
    c.encoder.attention_dropout = 0.1;
    c.schedule.kind = base ? optim::ScheduleKind::LinearWarmupLinearDecay : optim::ScheduleKind::LinearWarmupPolyDecay;
    c.schedule.lr_max = base ? 1.8e-4 : 1e-4;
    c.schedule.warmup_steps = 1800;
    c.total_steps = 100000;
    c.schedule.total_steps = c.total_steps;
    c.global_batch_size = base ? 14400 : 5120;
    c.precision.mode = optim::PrecisionMode::MixedEmulated;
    c.strategy = data::MaskStrategy::Wwm;
    return c;
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"desk", "toy-mlm", "base", "large"}; }

}  // namespace deskbert::harness
