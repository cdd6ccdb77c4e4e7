#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "deskbert/data/masking.hpp"
#include "deskbert/encoder/encoder.hpp"
#include "deskbert/optim/mixed_precision.hpp"
#include "deskbert/optim/optimizer.hpp"
#include "deskbert/optim/schedule.hpp"

namespace deskbert::harness {

struct DataConfig {
  std::string corpus;
  std::string lexicon;
  std::string vocab;
  std::string train_examples;
  std::string eval_examples;
  std::size_t min_count = 1;
  std::size_t max_vocab_size = 0;
  double positive_probability = 0.5;
};

// Offset-copy probe grid: every scheme x strategy cell trains a small model
// at sl_train and is scored at sl_train and sl_eval.
struct AblationConfig {
  std::vector<posenc::Scheme> schemes{posenc::Scheme::Pape, posenc::Scheme::Prpe, posenc::Scheme::Frpe};
  std::vector<data::MaskStrategy> strategies{data::MaskStrategy::Char, data::MaskStrategy::Wwm};
  std::size_t sl_train = 32;
  std::size_t sl_eval = 64;
  long offset = -3;
  std::size_t num_symbols = 16;
  double mark_rate = 0.15;
  std::size_t hidden_size = 32;
  std::size_t num_layers = 1;
  std::size_t num_heads = 2;
  std::size_t ffn_size = 64;
  int prpe_clip = 8;
  // 0 = sl_train, so PAPE cannot address the extrapolated positions.
  std::size_t pape_max_position = 0;
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double lr_max = 0.01;
  std::size_t warmup_steps = 100;
  std::size_t eval_examples = 200;
};

struct RunConfig {
  encoder::EncoderConfig encoder;
  DataConfig data;
  data::MaskStrategy strategy = data::MaskStrategy::Char;
  data::MaskingRates masking;
  optim::LrSchedule schedule;  // total_steps mirrors RunConfig::total_steps
  optim::PrecisionPolicy precision;
  optim::OptimizerConfig optimizer;
  std::size_t batch_size = 8;
  std::uint64_t total_steps = 100;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::uint64_t checkpoint_every = 0;  // 0 = only at the end
  // Measured seconds in the metrics log; off keeps logs reproducible.
  bool log_wall_time = false;
  std::string init_from;
  // Recorded only; desk runs use batch_size.
  std::size_t global_batch_size = 0;
  AblationConfig ablation;

  // Throws std::invalid_argument describing the first problem.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
// Unknown keys anywhere are rejected; absent keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// "desk" (defaults), "toy-mlm", "base" and "large" (full-scale schedules,
// not exercised by tests).
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace deskbert::harness
