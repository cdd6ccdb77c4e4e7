#include "deskbert/optim/mixed_precision.hpp"

#include <cmath>
#include <stdexcept>

#include "deskbert/error.hpp"
#include "deskbert/optim/half.hpp"

namespace deskbert::optim {

std::string to_string(PrecisionMode m) { return m == PrecisionMode::Full ? "full" : "mixed_emulated"; }

PrecisionMode parse_precision_mode(std::string_view name) {
  if (name == "full") return PrecisionMode::Full;
  if (name == "mixed_emulated") return PrecisionMode::MixedEmulated;
  throw std::invalid_argument("unknown precision mode '" + std::string(name) + "' (expected full|mixed_emulated)");
}

void PrecisionPolicy::validate() const {
  int exponent = 0;
  const double mantissa = std::frexp(loss_scale, &exponent);
  if (!(loss_scale >= 1.0) || !std::isfinite(loss_scale) || mantissa != 0.5)
    throw std::invalid_argument("loss_scale must be a power of two >= 1");
}

ParameterStore half_working_copy(const ParameterStore& master) {
  ParameterStore working = master;
  for (auto& p : working) round_half(p.value);
  return working;
}

StepOutcome mixed_precision_step(const PrecisionPolicy& policy, ParameterStore& master, OptimizerState& state,
                                 double lr, const GradFn& grad_fn, Gradients* grads_out) {
  policy.validate();
  StepOutcome outcome;
  Gradients grads = zero_gradients(master);
  if (policy.mode == PrecisionMode::Full) {
    outcome.loss = grad_fn(master, false, 1.0, grads);
    if (!std::isfinite(outcome.loss)) throw InvariantError("non-finite loss in full precision");
    optimizer_step(state, master, grads, lr);
    if (grads_out) *grads_out = std::move(grads);
    return outcome;
  }

  const ParameterStore working = half_working_copy(master);
  outcome.loss = grad_fn(working, true, policy.loss_scale, grads);
  bool finite = std::isfinite(outcome.loss);
  for (auto& g : grads)
    for (double& x : g.values()) {
      x /= policy.loss_scale;
      finite = finite && std::isfinite(x);
    }
  if (!finite) {
    if (!policy.skip_on_overflow)
      throw InvariantError("non-finite gradients under loss scale " + std::to_string(policy.loss_scale) +
                           " and overflow skipping is disabled");
    outcome.skipped = true;
    if (grads_out) *grads_out = std::move(grads);
    return outcome;
  }
  optimizer_step(state, master, grads, lr);
  if (grads_out) *grads_out = std::move(grads);
  return outcome;
}

}  // namespace deskbert::optim
