#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace deskbert::optim {

enum class ScheduleKind { LinearWarmupLinearDecay, LinearWarmupPolyDecay };

std::string to_string(ScheduleKind k);
ScheduleKind parse_schedule_kind(std::string_view name);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::LinearWarmupLinearDecay;
  double lr_max = 1e-3;
  std::uint64_t warmup_steps = 10;
  std::uint64_t total_steps = 100;
  double power = 1.0;

  // 0 < warmup < total, lr_max > 0, power > 0.
  void validate() const;
};

// Warmup lr_max * t / w, then lr_max * ((T - t) / (T - w))^p (p = 1 for the
// linear kind); 0 beyond T.
double lr_at_step(const LrSchedule& schedule, std::uint64_t t);

}  // namespace deskbert::optim
