#include "deskbert/harness/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "deskbert/data/examples_io.hpp"
#include "deskbert/error.hpp"
#include "deskbert/optim/mixed_precision.hpp"
#include "deskbert/optim/schedule.hpp"
#include "deskbert/rng.hpp"

namespace deskbert::harness {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInitStream = 0x1217;
constexpr std::uint64_t kDropoutStream = 0xd1b54a32d192ed03ull;

}  // namespace

Trainer::Trainer(RunConfig config, std::vector<data::PretrainExample> examples)
    : config_(std::move(config)), examples_(std::move(examples)), start_(std::chrono::steady_clock::now()) {
  config_.schedule.total_steps = config_.total_steps;
  config_.validate();
  for (const auto& e : examples_) data::validate_example(e, config_.encoder.vocab_size);
  if (config_.total_steps > 0 && examples_.empty()) throw UserError("pretrain: the example file is empty");
  model_ = std::make_unique<encoder::EncoderModel>(config_.encoder, mix_seed(config_.seed, kInitStream));
  state_ = optim::OptimizerState(config_.optimizer, model_->params());
}

void Trainer::init_from(const Checkpoint& ckpt) {
  restore_parameters(ckpt, model_->params(), true);
  state_ = optim::OptimizerState(config_.optimizer, model_->params());
  step_ = 0;
}

void Trainer::resume(const Checkpoint& ckpt) {
  restore_parameters(ckpt, model_->params(), true);
  state_ = ckpt.optimizer;
  state_.config = config_.optimizer;
  step_ = ckpt.step;
}

std::vector<std::size_t> Trainer::batch_indices(std::uint64_t step) const {
  std::mt19937_64 rng(mix_seed(config_.seed, step));
  std::uniform_int_distribution<std::size_t> pick(0, examples_.size() - 1);
  std::vector<std::size_t> idx(config_.batch_size);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

MetricsRecord Trainer::train_step() {
  const std::uint64_t t = step_ + 1;
  std::vector<data::PretrainExample> batch;
  for (std::size_t i : batch_indices(t)) batch.push_back(examples_[i]);
  const double lr = optim::lr_at_step(config_.schedule, t);
  const std::uint64_t dropout_seed = mix_seed(config_.seed ^ kDropoutStream, t);

  encoder::BatchResult stats;
  const optim::GradFn grad_fn = [&](const ParameterStore& weights, bool emulate, double scale, Gradients& grads) {
    stats = encoder::batch_gradients(*model_, weights, batch, dropout_seed, emulate, scale);
    grads = std::move(stats.grads);
    return stats.loss;
  };
  const optim::StepOutcome outcome =
      optim::mixed_precision_step(config_.precision, model_->params(), state_, lr, grad_fn);
  step_ = t;

  MetricsRecord r;
  r.step = t;
  r.loss = outcome.loss;
  r.mlm_loss = stats.mlm_loss;
  r.nsp_loss = stats.nsp_loss;
  r.mlm_accuracy = stats.mlm_count ? double(stats.mlm_correct) / double(stats.mlm_count) : 0.0;
  r.lr = lr;
  r.skipped = outcome.skipped;
  if (config_.log_wall_time)
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  return r;
}

fs::path checkpoint_dir(const fs::path& out_dir, std::uint64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "step-%06llu", static_cast<unsigned long long>(step));
  return out_dir / "checkpoints" / name;
}

PretrainResult run_pretraining(const RunConfig& config, std::vector<data::PretrainExample> examples,
                               const fs::path& out_dir, const std::optional<fs::path>& resume_from) {
  Trainer trainer(config, std::move(examples));
  nlohmann::json header{{"config", to_json(trainer.config())}, {"seed", trainer.config().seed}};
  if (resume_from) {
    const Checkpoint ck = load_checkpoint(*resume_from);
    trainer.resume(ck);
    header["resumed_from_step"] = ck.step;
  } else if (!config.init_from.empty()) {
    trainer.init_from(load_checkpoint(config.init_from));
    header["init_from"] = config.init_from;
  }
  fs::create_directories(out_dir);
  MetricsWriter writer(out_dir / "metrics.jsonl", header);

  PretrainResult result;
  nlohmann::json last = nlohmann::json::object();
  auto save = [&](std::uint64_t step) {
    const fs::path dir = checkpoint_dir(out_dir, step);
    save_checkpoint(dir, trainer.config(), trainer.model().params(), trainer.optimizer(), step, last);
    std::ofstream(out_dir / "checkpoints" / "latest") << dir.filename().string() << '\n';
    result.final_checkpoint = dir;
  };

  while (trainer.step() < config.total_steps) {
    MetricsRecord r;
    try {
      r = trainer.train_step();
    } catch (const InvariantError& e) {
      const fs::path diag = out_dir / ("diagnostic-step-" + std::to_string(trainer.step() + 1));
      save_checkpoint(diag, trainer.config(), trainer.model().params(), trainer.optimizer(), trainer.step(), last);
      throw InvariantError(std::string(e.what()) + " at step " + std::to_string(trainer.step() + 1) +
                           "; pre-step snapshot written to " + diag.string());
    }
    writer.write(r);
    last = r.to_json();
    result.records.push_back(r);
    if (config.checkpoint_every && r.step % config.checkpoint_every == 0) save(r.step);
  }
  if (result.final_checkpoint.empty() || result.final_checkpoint != checkpoint_dir(out_dir, trainer.step()))
    save(trainer.step());
  return result;
}

nlohmann::json EvalReport::to_json() const {
  return {{"examples", examples},       {"mlm_count", mlm_count},         {"mlm_correct", mlm_correct},
          {"mlm_accuracy", mlm_accuracy()}, {"mlm_loss", mlm_loss()},     {"nsp_count", nsp_count},
          {"nsp_correct", nsp_correct}, {"nsp_accuracy", nsp_accuracy()}};
}

EvalReport evaluate(const encoder::EncoderModel& model, std::span<const data::PretrainExample> examples) {
  EvalReport report;
  for (const auto& e : examples) {
    data::validate_example(e, model.config().vocab_size);
    const encoder::LossBundle b = encoder::evaluate_example(model, e);
    ++report.examples;
    report.mlm_count += b.mlm_count;
    report.mlm_correct += b.mlm_correct;
    report.mlm_loss_sum += b.mlm_loss * double(b.mlm_count);
    if (b.has_nsp) {
      ++report.nsp_count;
      if (b.nsp_correct) ++report.nsp_correct;
    }
  }
  return report;
}

}  // namespace deskbert::harness
