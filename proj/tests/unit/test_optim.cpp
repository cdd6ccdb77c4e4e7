#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "deskbert/error.hpp"
#include "deskbert/numerics/autodiff.hpp"
#include "deskbert/optim/half.hpp"
#include "deskbert/optim/mixed_precision.hpp"
#include "deskbert/optim/optimizer.hpp"
#include "deskbert/optim/schedule.hpp"
#include "oracles.hpp"

using namespace deskbert;
using namespace deskbert::optim;
using oracle::decode_half;
using oracle::nearest_half;

namespace {

ParameterStore store_of(std::initializer_list<double> w, bool exempt = false) {
  ParameterStore s;
  s.add("w", Tensor({w.size()}, std::vector<double>(w)), exempt);
  return s;
}

Gradients grads_of(std::initializer_list<double> g) { return {Tensor({g.size()}, std::vector<double>(g))}; }

double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("binary16 decoding covers every bit pattern") {
  std::size_t nan_count = 0;
  for (std::uint32_t b = 0; b <= 0xffff; ++b) {
    const double expect = decode_half(std::uint16_t(b));
    const double got = from_half_bits(std::uint16_t(b));
    if (std::isnan(expect)) {
      ++nan_count;
      CHECK(std::isnan(got));
      continue;
    }
    CHECK(got == expect);
    CHECK(std::signbit(got) == std::signbit(expect));
    // Every representable value is a fixed point of rounding.
    CHECK(round_half(expect) == expect);
    CHECK(to_half_bits(expect) == b);
  }
  CHECK(nan_count == 2 * 1023);
}

TEST_CASE("rounding to binary16 matches the grid oracle") {
  CHECK(round_half(1.0) == 1.0);
  CHECK(round_half(2049.0) == 2048.0);
  CHECK(round_half(2051.0) == 2052.0);
  CHECK(round_half(65504.0) == kHalfMax);
  CHECK(round_half(65519.99) == kHalfMax);
  CHECK(std::isinf(round_half(65520.0)));
  CHECK(std::isinf(round_half(-1e6)));
  CHECK(round_half(std::ldexp(1.0, -25)) == 0.0);  // tie between 0 and the smallest subnormal
  CHECK(round_half(std::ldexp(1.5, -25)) == std::ldexp(1.0, -24));
  CHECK(std::isnan(round_half(std::nan(""))));

  // Midpoints between neighbours exercise ties to even.
  const auto& g = oracle::half_grid();
  for (std::size_t i = 0; i + 1 < g.values.size(); i += 7) {
    const double mid = 0.5 * (g.values[i] + g.values[i + 1]);
    CHECK(round_half(mid) == nearest_half(mid));
    CHECK(round_half(-mid) == nearest_half(-mid));
  }
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> e(-26, 17), m(1, 2);
  for (int i = 0; i < 200000; ++i) {
    const double x = std::ldexp(m(rng), int(std::floor(e(rng)))) * (i % 2 ? -1 : 1);
    const double r = round_half(x);
    CHECK(r == nearest_half(x));
    CHECK(round_half(r) == r);
  }
}

TEST_CASE("zero gradients leave LAMB weights unchanged") {
  auto s = store_of({0.5, -1.0, 2.0});
  const Tensor before = s[0].value;
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  OptimizerState st(cfg, s);
  for (int i = 0; i < 5; ++i) lamb_step(st, s, grads_of({0, 0, 0}), 0.1);
  CHECK(s[0].value == before);
}

TEST_CASE("first LAMB step on a scalar moves by lr") {
  for (double g : {1e-3, 0.7, 40.0}) {
    auto s = store_of({1.0});
    OptimizerState st(OptimizerConfig{}, s);
    lamb_step(st, s, grads_of({g}), 0.01);
    CHECK(std::abs(s[0].value[0] - 0.99) < 1e-9);
  }
}

TEST_CASE("LAMB update norm is lr times the weight norm") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  ParameterStore s;
  s.add("a", Tensor({4, 5}, 0.0));
  s.add("b", Tensor({7}, 0.0));
  for (auto& p : s)
    for (double& x : p.value.values()) x = n(rng);
  OptimizerState st(OptimizerConfig{}, s);
  const double lr = 0.003;
  for (int step = 0; step < 100; ++step) {
    Gradients g = zero_gradients(s);
    for (auto& t : g)
      for (double& x : t.values()) x = n(rng);
    const ParameterStore before = s;
    const auto report = lamb_step(st, s, g, lr);
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::vector<double> delta(s[i].value.size());
      for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = s[i].value[k] - before[i].value[k];
      const double w = norm(before[i].value.values());
      CHECK(std::abs(norm(delta) - lr * w) < 1e-12 * std::max(1.0, lr * w));
      CHECK(report.trust[i] > 0);
    }
  }
}

TEST_CASE("LAMB moments against a brute-force recomputation") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-6, wd = 0.01, lr = 0.02;
  std::vector<double> w(6);
  for (double& x : w) x = n(rng);
  ParameterStore s;
  s.add("w", Tensor({2, 3}, w));
  OptimizerState st(OptimizerConfig{}, s);
  std::vector<std::vector<double>> history;
  for (int t = 1; t <= 10; ++t) {
    std::vector<double> g(6);
    for (double& x : g) x = n(rng);
    history.push_back(g);
    lamb_step(st, s, {Tensor({2, 3}, g)}, lr);

    // Moments as explicit weighted sums over the whole history.
    std::vector<double> u(6);
    for (std::size_t k = 0; k < 6; ++k) {
      double m = 0, v = 0;
      for (int j = 1; j <= t; ++j) {
        const double gj = history[std::size_t(j - 1)][k];
        m += (1 - b1) * std::pow(b1, t - j) * gj;
        v += (1 - b2) * std::pow(b2, t - j) * gj * gj;
      }
      const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
      CHECK(std::abs(st.m[0][k] - m) < 1e-14);
      CHECK(std::abs(st.v[0][k] - v) < 1e-14);
      u[k] = mh / (std::sqrt(vh) + eps) + wd * w[k];
    }
    const double trust = norm(w) / norm(u);
    for (std::size_t k = 0; k < 6; ++k) w[k] -= lr * trust * u[k];
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(s[0].value[k] - w[k]) < 1e-14);
  }
  CHECK(st.step == 10);
}

TEST_CASE("LAMB minimises a convex quadratic") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1), curv(0.5, 2.0);
  const std::size_t dim = 100;
  std::vector<double> target(dim), a(dim), w0(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    target[i] = u(rng);
    a[i] = curv(rng);
    w0[i] = u(rng);
  }
  ParameterStore s;
  s.add("w", Tensor({dim}, w0));
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  OptimizerState st(cfg, s);
  const LrSchedule sched{ScheduleKind::LinearWarmupLinearDecay, 0.05, 100, 2000, 1.0};
  auto loss = [&] {
    double l = 0;
    for (std::size_t i = 0; i < dim; ++i) l += 0.5 * a[i] * std::pow(s[0].value[i] - target[i], 2);
    return l;
  };
  const double initial = loss();
  for (std::uint64_t t = 1; t <= 2000; ++t) {
    Gradients g = zero_gradients(s);
    for (std::size_t i = 0; i < dim; ++i) g[0][i] = a[i] * (s[0].value[i] - target[i]);
    lamb_step(st, s, g, lr_at_step(sched, t));
  }
  double dist = 0;
  for (std::size_t i = 0; i < dim; ++i) dist += std::pow(s[0].value[i] - target[i], 2);
  CHECK(initial > 1.0);
  CHECK(loss() < 1e-6);
  CHECK(std::sqrt(dist) < 1e-3);
}

TEST_CASE("Adam step and agreement with LAMB at unit trust") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Adam;
  cfg.weight_decay = 0.0;
  auto s = store_of({1.0});
  OptimizerState st(cfg, s);
  adam_step(st, s, grads_of({1.0}), 0.01);
  CHECK(std::abs(s[0].value[0] - (1.0 - 0.01 / (1.0 + 1e-6))) < 1e-15);

  // Exempt tensors get trust 1 and no decay, which is plain Adam.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  auto la = store_of({0.3, -0.2, 0.9}, true), ad = la;
  OptimizerConfig lc;
  OptimizerConfig ac = lc;
  ac.kind = OptimizerKind::Adam;
  OptimizerState ls(lc, la), as(ac, ad);
  for (int i = 0; i < 20; ++i) {
    const auto g = grads_of({n(rng), n(rng), n(rng)});
    const auto r = optimizer_step(ls, la, g, 0.01);
    CHECK(r.trust[0] == 1.0);
    optimizer_step(as, ad, g, 0.01);
  }
  for (std::size_t k = 0; k < 3; ++k) CHECK(la[0].value[k] == doctest::Approx(ad[0].value[k]).epsilon(1e-15));
}

TEST_CASE("non-finite gradients are rejected before any change") {
  auto s = store_of({1.0, 2.0});
  OptimizerState st(OptimizerConfig{}, s);
  const auto before = s[0].value;
  CHECK_THROWS(lamb_step(st, s, grads_of({1.0, std::numeric_limits<double>::infinity()}), 0.1));
  CHECK(s[0].value == before);
  CHECK(st.step == 0);
}

TEST_CASE("learning-rate schedule") {
  const LrSchedule lin{ScheduleKind::LinearWarmupLinearDecay, 1e-3, 10, 110, 1.0};
  CHECK(lr_at_step(lin, 0) == 0.0);
  CHECK(lr_at_step(lin, 5) == doctest::Approx(5e-4));
  CHECK(lr_at_step(lin, 10) == doctest::Approx(1e-3));
  CHECK(lr_at_step(lin, 60) == doctest::Approx(5e-4));
  CHECK(lr_at_step(lin, 110) == 0.0);
  CHECK(lr_at_step(lin, 500) == 0.0);
  CHECK(std::abs(lr_at_step(lin, 9) - lr_at_step(lin, 10)) <= 1e-4 + 1e-15);
  CHECK(std::abs(lr_at_step(lin, 11) - lr_at_step(lin, 10)) <= 1e-5 + 1e-15);
  for (std::uint64_t t = 10; t < 110; ++t) CHECK(lr_at_step(lin, t + 1) <= lr_at_step(lin, t));

  const LrSchedule poly{ScheduleKind::LinearWarmupPolyDecay, 1e-3, 10, 110, 2.0};
  CHECK(lr_at_step(poly, 60) == doctest::Approx(2.5e-4));
  CHECK(lr_at_step(poly, 110) == 0.0);

  CHECK_THROWS_AS((LrSchedule{ScheduleKind::LinearWarmupLinearDecay, 1e-3, 10, 10, 1.0}.validate()),
                  std::invalid_argument);
  CHECK_THROWS_AS((LrSchedule{ScheduleKind::LinearWarmupLinearDecay, 0.0, 1, 10, 1.0}.validate()),
                  std::invalid_argument);
}

TEST_CASE("mixed precision") {
  // loss = sum(w^2) through the tape, so half emulation and the seed scale
  // are the real ones.
  std::vector<std::pair<bool, double>> calls;
  const GradFn sum_sq = [&](const ParameterStore& weights, bool half, double loss_scale, Gradients& grads) {
    calls.emplace_back(half, loss_scale);
    Tape tape(half);
    const Var loss = ad::sum_squares(tape.param(weights, 0));
    tape.backward(loss, loss_scale);
    tape.collect(weights, grads);
    return loss.value()[0];
  };

  PrecisionPolicy full;
  auto a = store_of({0.1234567, -0.7654321}), b = a;
  OptimizerState sa(OptimizerConfig{}, a), sb(OptimizerConfig{}, b);
  mixed_precision_step(full, a, sa, 0.01, sum_sq);
  CHECK(calls.back() == std::make_pair(false, 1.0));
  lamb_step(sb, b, grads_of({2 * 0.1234567, -2 * 0.7654321}), 0.01);
  CHECK(a[0].value == b[0].value);

  PrecisionPolicy mixed;
  mixed.mode = PrecisionMode::MixedEmulated;
  auto m = store_of({0.1234567, -0.7654321});
  OptimizerState sm(OptimizerConfig{}, m);
  Gradients seen;
  for (int i = 0; i < 3; ++i) mixed_precision_step(mixed, m, sm, 1e-4, sum_sq, &seen);
  CHECK(calls.back() == std::make_pair(true, 1024.0));
  // Gradients were taken at the half image of the weights.
  CHECK(seen[0][0] == doctest::Approx(2 * round_half(m[0].value[0])).epsilon(1e-2));
  // Master weights keep full precision.
  CHECK(m[0].value[0] != round_half(m[0].value[0]));
  CHECK(m[0].value[1] != round_half(m[0].value[1]));
  CHECK(sm.step == 3);

  const GradFn overflow = [](const ParameterStore&, bool half, double loss_scale, Gradients& grads) {
    const double g = std::ldexp(1.0, 30) * loss_scale;
    grads[0][0] = half ? round_half(g) : g;
    return 1.0;
  };
  const auto before = m[0].value;
  const auto moments = sm.m;
  const auto outcome = mixed_precision_step(mixed, m, sm, 1e-4, overflow);
  CHECK(outcome.skipped);
  CHECK(m[0].value == before);
  CHECK(sm.m == moments);
  CHECK(sm.step == 3);

  mixed.skip_on_overflow = false;
  CHECK_THROWS_AS(mixed_precision_step(mixed, m, sm, 1e-4, overflow), InvariantError);

  mixed.loss_scale = 1000.0;
  CHECK_THROWS_AS(mixed.validate(), std::invalid_argument);
  mixed.loss_scale = 0.5;
  CHECK_THROWS_AS(mixed.validate(), std::invalid_argument);
  mixed.loss_scale = 1.0;
  CHECK_NOTHROW(mixed.validate());

  const auto w = half_working_copy(store_of({0.1, 70000.0}));
  CHECK(w[0].value[0] == round_half(0.1));
  CHECK(std::isinf(w[0].value[1]));
}

TEST_CASE("optimizer config parsing and validation") {
  CHECK(parse_optimizer_kind("lamb") == OptimizerKind::Lamb);
  CHECK(parse_optimizer_kind("adam") == OptimizerKind::Adam);
  CHECK_THROWS_AS(parse_optimizer_kind("sgd"), std::invalid_argument);
  OptimizerConfig cfg;
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(parse_precision_mode("mixed_emulated") == PrecisionMode::MixedEmulated);
}
