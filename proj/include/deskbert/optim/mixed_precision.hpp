#pragma once

#include <functional>
#include <string>
#include <string_view>

#include "deskbert/numerics/parameters.hpp"
#include "deskbert/optim/optimizer.hpp"

namespace deskbert::optim {

enum class PrecisionMode { Full, MixedEmulated };

std::string to_string(PrecisionMode m);
PrecisionMode parse_precision_mode(std::string_view name);

struct PrecisionPolicy {
  PrecisionMode mode = PrecisionMode::Full;
  double loss_scale = 1024.0;  // static; a power of two >= 1
  bool skip_on_overflow = true;

  void validate() const;
};

// Computes the loss and the gradients of (loss_scale * loss) with respect to
// `weights`, with every primitive output rounded to binary16 when
// `emulate_half` is set. Returns the unscaled loss.
using GradFn =
    std::function<double(const ParameterStore& weights, bool emulate_half, double loss_scale, Gradients& grads)>;

struct StepOutcome {
  double loss = 0.0;
  bool skipped = false;
};

// Full: plain gradient + optimizer update. MixedEmulated: working weights are
// the binary16 images of the master weights, gradients come back scaled and
// half-rounded, are widened and unscaled, and the optimizer updates the
// master weights in double precision. Non-finite gradients skip the update
// (master and optimizer state untouched) or throw, per the policy.
StepOutcome mixed_precision_step(const PrecisionPolicy& policy, ParameterStore& master, OptimizerState& state,
                                 double lr, const GradFn& grad_fn, Gradients* grads_out = nullptr);

// Copy of `master` with every value rounded to binary16.
ParameterStore half_working_copy(const ParameterStore& master);

}  // namespace deskbert::optim
