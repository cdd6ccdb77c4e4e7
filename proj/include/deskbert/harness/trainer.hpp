#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "deskbert/data/example.hpp"
#include "deskbert/encoder/encoder.hpp"
#include "deskbert/harness/checkpoint.hpp"
#include "deskbert/harness/config.hpp"
#include "deskbert/harness/metrics.hpp"
#include "deskbert/optim/optimizer.hpp"

namespace deskbert::harness {

// Step t (1-based) draws its batch from mix_seed(seed, t) and its dropout
// masks from a second stream keyed by t, so a run resumed at any step sees
// exactly the batches of an uninterrupted run.
class Trainer {
 public:
  Trainer(RunConfig config, std::vector<data::PretrainExample> examples);

  const RunConfig& config() const { return config_; }
  encoder::EncoderModel& model() { return *model_; }
  const encoder::EncoderModel& model() const { return *model_; }
  optim::OptimizerState& optimizer() { return state_; }
  const optim::OptimizerState& optimizer() const { return state_; }
  std::uint64_t step() const { return step_; }

  // Overwrites parameters with a checkpoint's (full-precision) weights and
  // resets the optimizer; used for chained initialization.
  void init_from(const Checkpoint& ckpt);
  // Restores parameters, optimizer state and the step counter.
  void resume(const Checkpoint& ckpt);

  std::vector<std::size_t> batch_indices(std::uint64_t step) const;

  // Runs step() + 1. Throws InvariantError on a non-finite loss in full
  // precision; parameters are untouched in that case.
  MetricsRecord train_step();

 private:
  RunConfig config_;
  std::vector<data::PretrainExample> examples_;
  std::unique_ptr<encoder::EncoderModel> model_;
  optim::OptimizerState state_;
  std::uint64_t step_ = 0;
  std::chrono::steady_clock::time_point start_;
};

struct PretrainResult {
  std::vector<MetricsRecord> records;
  std::filesystem::path final_checkpoint;
};

// Trains to config.total_steps, writing <out>/metrics.jsonl and checkpoints
// under <out>/checkpoints/step-NNNNNN (every checkpoint_every steps and at
// the end). On a non-finite loss in full precision a diagnostic checkpoint
// of the pre-step weights is written before the error propagates.
PretrainResult run_pretraining(const RunConfig& config, std::vector<data::PretrainExample> examples,
                               const std::filesystem::path& out_dir,
                               const std::optional<std::filesystem::path>& resume_from = std::nullopt);

struct EvalReport {
  std::size_t examples = 0;
  std::size_t mlm_count = 0;
  std::size_t mlm_correct = 0;
  double mlm_loss_sum = 0.0;  // summed per-target cross-entropy
  std::size_t nsp_count = 0;
  std::size_t nsp_correct = 0;

  double mlm_accuracy() const { return mlm_count ? double(mlm_correct) / double(mlm_count) : 0.0; }
  double mlm_loss() const { return mlm_count ? mlm_loss_sum / double(mlm_count) : 0.0; }
  double nsp_accuracy() const { return nsp_count ? double(nsp_correct) / double(nsp_count) : 0.0; }
  nlohmann::json to_json() const;
};

EvalReport evaluate(const encoder::EncoderModel& model, std::span<const data::PretrainExample> examples);

std::filesystem::path checkpoint_dir(const std::filesystem::path& out_dir, std::uint64_t step);

}  // namespace deskbert::harness
