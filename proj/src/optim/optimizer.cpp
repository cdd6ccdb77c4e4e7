#include "deskbert/optim/optimizer.hpp"

#include <cmath>
#include <span>
#include <stdexcept>

#include "deskbert/error.hpp"

namespace deskbert::optim {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Lamb ? "lamb" : "adam"; }

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "lamb") return OptimizerKind::Lamb;
  if (name == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "' (expected lamb|adam)");
}

void OptimizerConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
}

OptimizerState::OptimizerState(OptimizerConfig cfg, const ParameterStore& params) : config(cfg) {
  config.validate();
  for (const auto& p : params) {
    m.emplace_back(p.value.shape(), 0.0);
    v.emplace_back(p.value.shape(), 0.0);
  }
}

namespace {

StepReport step_impl(OptimizerState& state, ParameterStore& params, const Gradients& grads, double lr,
                     bool use_trust) {
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw std::invalid_argument("optimizer: gradient/state count does not match the parameter store");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params[i].value))
      throw std::invalid_argument("optimizer: gradient shape mismatch for " + params[i].name);
    for (double g : grads[i].values())
      if (!std::isfinite(g)) throw InvariantError("optimizer: non-finite gradient in " + params[i].name);
  }

  const OptimizerConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  StepReport report;
  report.trust.reserve(params.size());
  std::vector<double> u;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::span<double> w = params[i].value.values();
    const std::span<double> m = state.m[i].values();
    const std::span<double> v = state.v[i].values();
    const std::span<const double> g = grads[i].values();
    const bool exempt = c.exclude_exempt && params[i].exempt;
    const double lambda = exempt ? 0.0 : c.weight_decay;

    u.resize(w.size());
    double w_sq = 0.0, u_sq = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double r = (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.epsilon);
      u[k] = r + lambda * w[k];
      w_sq += w[k] * w[k];
      u_sq += u[k] * u[k];
    }
    double trust = 1.0;
    if (use_trust && !exempt) {
      const double wn = std::sqrt(w_sq), un = std::sqrt(u_sq);
      if (wn > 0.0 && un > 0.0) trust = wn / un;
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * trust * u[k];
    report.trust.push_back(trust);
  }
  return report;
}

}  // namespace

StepReport lamb_step(OptimizerState& state, ParameterStore& params, const Gradients& grads, double lr) {
  return step_impl(state, params, grads, lr, true);
}

StepReport adam_step(OptimizerState& state, ParameterStore& params, const Gradients& grads, double lr) {
  return step_impl(state, params, grads, lr, false);
}

StepReport optimizer_step(OptimizerState& state, ParameterStore& params, const Gradients& grads, double lr) {
  return state.config.kind == OptimizerKind::Lamb ? lamb_step(state, params, grads, lr)
                                                  : adam_step(state, params, grads, lr);
}

}  // namespace deskbert::optim
