#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "deskbert/numerics/parameters.hpp"

namespace deskbert::optim {

enum class OptimizerKind { Lamb, Adam };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Lamb;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  double weight_decay = 0.01;
  // Parameters flagged exempt (norms, biases) get no decay and trust 1.
  bool exclude_exempt = true;

  void validate() const;
};

// Moments per parameter tensor plus the global step count.
struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  OptimizerState() = default;
  OptimizerState(OptimizerConfig cfg, const ParameterStore& params);
};

// Trust ratio used for each tensor on the last call (1 for Adam).
struct StepReport {
  std::vector<double> trust;
};

// m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2, r = m^/(sqrt(v^) + eps),
// u = r + lambda w, w <- w - lr * trust * u with trust = |w| / |u| per tensor
// (1 if either norm is 0). Non-finite gradients throw before any change.
StepReport lamb_step(OptimizerState& state, ParameterStore& params, const Gradients& grads, double lr);
// Same moments, w <- w - lr * u.
StepReport adam_step(OptimizerState& state, ParameterStore& params, const Gradients& grads, double lr);
// Dispatches on state.config.kind.
StepReport optimizer_step(OptimizerState& state, ParameterStore& params, const Gradients& grads, double lr);

}  // namespace deskbert::optim
