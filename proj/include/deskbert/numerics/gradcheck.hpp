#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "deskbert/numerics/parameters.hpp"

namespace deskbert {

// Evaluates the loss at the given parameters. When `grads` is non-null it
// also runs the tape backward and adds the gradients into it.
using LossFunction = std::function<double(const ParameterStore& params, Gradients* grads)>;

struct GradCheckOptions {
  double step = 1e-4;
  // Further step sizes tried per coordinate; the smallest error counts.
  // Coordinates with tiny gradients need a larger step to get above the
  // roundoff floor of the loss, large-curvature ones need a smaller one.
  std::vector<double> extra_steps;
  // Parameters with fewer elements are checked exhaustively.
  std::size_t samples_per_param = 64;
  std::uint64_t seed = 0;
};

struct ParamGradReport {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  std::size_t worst_coord = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<ParamGradReport> params;

  bool passed(double threshold) const { return max_rel_error < threshold; }
};

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double analytic, double numeric);

// Compares tape gradients with central differences (f(p+h) - f(p-h)) / 2h.
// Throws InvariantError if two evaluations at the same point disagree.
GradCheckReport check_gradients(const LossFunction& loss, ParameterStore& params,
                                const GradCheckOptions& options = {});

}  // namespace deskbert
