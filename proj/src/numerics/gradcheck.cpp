#include "deskbert/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "deskbert/error.hpp"

namespace deskbert {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(const LossFunction& loss, ParameterStore& params, const GradCheckOptions& options) {
  for (double h : options.extra_steps)
    if (!(h > 0.0)) throw std::invalid_argument("check_gradients: steps must be positive");
  if (!(options.step > 0.0)) throw std::invalid_argument("check_gradients: step must be positive");

  Gradients analytic = zero_gradients(params);
  const double base = loss(params, &analytic);
  const double again = loss(params, nullptr);
  if (base != again)
    throw InvariantError("check_gradients: loss function is not deterministic (" + std::to_string(base) + " vs " +
                         std::to_string(again) + ")");

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = params[p].value;
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.samples_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.samples_per_param);
      std::sort(coords.begin(), coords.end());
    }

    ParamGradReport entry{params[p].name, coords.size()};
    for (std::size_t c : coords) {
      const double original = value[c];
      double err = std::numeric_limits<double>::infinity();
      auto try_step = [&](double h) {
        value[c] = original + h;
        const double up = loss(params, nullptr);
        value[c] = original - h;
        const double down = loss(params, nullptr);
        value[c] = original;
        err = std::min(err, relative_error(analytic[p][c], (up - down) / (2.0 * h)));
      };
      try_step(options.step);
      for (double h : options.extra_steps)
        if (err >= 1e-6) try_step(h);
      entry.max_abs_grad = std::max(entry.max_abs_grad, std::abs(analytic[p][c]));
      if (err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_coord = c;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace deskbert
