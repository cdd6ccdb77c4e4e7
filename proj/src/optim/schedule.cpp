#include "deskbert/optim/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace deskbert::optim {

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::LinearWarmupLinearDecay ? "linear_warmup_linear_decay" : "linear_warmup_poly_decay";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "linear_warmup_linear_decay") return ScheduleKind::LinearWarmupLinearDecay;
  if (name == "linear_warmup_poly_decay") return ScheduleKind::LinearWarmupPolyDecay;
  throw std::invalid_argument("unknown schedule kind '" + std::string(name) +
                              "' (expected linear_warmup_linear_decay|linear_warmup_poly_decay)");
}

void LrSchedule::validate() const {
  if (!(lr_max > 0.0) || !std::isfinite(lr_max)) throw std::invalid_argument("lr_max must be positive and finite");
  if (warmup_steps == 0 || warmup_steps >= total_steps)
    throw std::invalid_argument("schedule needs 0 < warmup_steps < total_steps (got " + std::to_string(warmup_steps) +
                                ", " + std::to_string(total_steps) + ")");
  if (!(power > 0.0)) throw std::invalid_argument("poly decay power must be positive");
}

double lr_at_step(const LrSchedule& s, std::uint64_t t) {
  if (t > s.total_steps) return 0.0;
  if (t <= s.warmup_steps) return s.lr_max * static_cast<double>(t) / static_cast<double>(s.warmup_steps);
  const double frac =
      static_cast<double>(s.total_steps - t) / static_cast<double>(s.total_steps - s.warmup_steps);
  if (s.kind == ScheduleKind::LinearWarmupLinearDecay) return s.lr_max * frac;
  return s.lr_max * std::pow(frac, s.power);
}

}  // namespace deskbert::optim
