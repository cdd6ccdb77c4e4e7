#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "deskbert/encoder/encoder.hpp"
#include "deskbert/optim/optimizer.hpp"
#include "deskbert/posenc/posenc.hpp"

using namespace deskbert;
using posenc::Role;
using posenc::Scheme;

namespace {

// 40-digit mpmath values.
constexpr double kSin1 = 0.8414709848078965066525023216302989996226;
constexpr double kCos1 = 0.5403023058681397174009366074429766037323;

// Extended-precision sinusoid through exp/log instead of pow.
long double oracle_component(long delta, std::size_t k, std::size_t d_z, bool cosine) {
  const long double inv_wavelength = expl(-(2.0L * k / d_z) * logl(10000.0L));
  const long double angle = static_cast<long double>(delta) * inv_wavelength;
  return cosine ? cosl(angle) : sinl(angle);
}

posenc::EncodingScheme scheme_of(Scheme kind, int clip = 16, std::size_t max_position = 512) {
  posenc::EncodingScheme s;
  s.kind = kind;
  s.prpe_clip = clip;
  s.max_position = max_position;
  return s;
}

}  // namespace

TEST_CASE("frpe_vector fixed cases") {
  CHECK(posenc::frpe_vector(0, 4) == std::vector<double>{0, 1, 0, 1});
  const auto one = posenc::frpe_vector(1, 2);
  CHECK(one[0] == doctest::Approx(kSin1).epsilon(1e-15));
  CHECK(one[1] == doctest::Approx(kCos1).epsilon(1e-15));
  for (std::size_t dz : {2, 6, 16}) {
    const auto p = posenc::frpe_vector(5, dz), n = posenc::frpe_vector(-5, dz);
    for (std::size_t k = 0; k < dz; k += 2) {
      CHECK(n[k] == -p[k]);
      CHECK(n[k + 1] == p[k + 1]);
    }
  }
  CHECK_THROWS_AS(posenc::frpe_vector(1, 3), std::invalid_argument);
}

TEST_CASE("frpe_vector against an extended-precision oracle") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<long> delta(-511, 511);
  std::uniform_int_distribution<int> dz_pick(1, 32);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t dz = 2 * dz_pick(rng);
    const long d = delta(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, dz / 2 - 1)(rng);
    const auto v = posenc::frpe_vector(d, dz);
    worst = std::max(worst, double(std::fabs(v[2 * k] - oracle_component(d, k, dz, false))));
    worst = std::max(worst, double(std::fabs(v[2 * k + 1] - oracle_component(d, k, dz, true))));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("frpe squared norm is d_z / 2 and entries lie in [-1, 1]") {
  for (std::size_t dz : {2, 8, 64})
    for (long d = -511; d <= 511; ++d) {
      const auto v = posenc::frpe_vector(d, dz);
      double s = 0;
      for (double x : v) {
        s += x * x;
        CHECK(std::abs(x) <= 1.0);
      }
      CHECK(std::abs(s - double(dz) / 2) < 1e-9);
    }
}

TEST_CASE("frpe component pairs follow their wavelengths") {
  const std::size_t dz = 8;
  for (std::size_t k = 0; k < dz / 2; ++k) {
    const double period = 2 * M_PI * std::pow(10000.0, 2.0 * k / dz);
    for (long d = 1; d < 2000; d += 7) {
      const double phase = std::fmod(double(d), period);
      if (std::abs(phase) < 1e-3 || std::abs(phase - period / 2) < 1e-3) continue;
      const double expected_sign = phase < period / 2 ? 1.0 : -1.0;
      CHECK(std::copysign(1.0, posenc::frpe_vector(d, dz)[2 * k]) == expected_sign);
    }
  }
}

TEST_CASE("relative tables") {
  const auto single = posenc::build_rel_table(1, 4, scheme_of(Scheme::Frpe), 0);
  CHECK(single.rows() == 1);
  CHECK(single.reach() == 0);

  const auto t = posenc::build_rel_table(3, 4, scheme_of(Scheme::Frpe), 0);
  REQUIRE(t.rows() == 5);
  for (long d = -2; d <= 2; ++d) {
    const auto expect = posenc::frpe_vector(d, 4);
    const auto row = t.bank(Role::Key).row(t.row_for(d));
    CHECK(std::vector<double>(row.begin(), row.end()) == expect);
  }
  CHECK(t.bank(Role::Key) == t.bank(Role::Value));

  const auto p = posenc::build_rel_table(8, 4, scheme_of(Scheme::Prpe, 2), 3);
  CHECK(p.rows() == 5);
  CHECK_FALSE(p.bank(Role::Key) == p.bank(Role::Value));
}

TEST_CASE("rel_lookup") {
  auto frpe = posenc::build_rel_table(32, 6, scheme_of(Scheme::Frpe), 0);
  CHECK(posenc::rel_lookup(frpe, 4, 4, Role::Key) == std::vector<double>{0, 1, 0, 1, 0, 1});
  // Past the built range the table grows instead of failing.
  CHECK(posenc::rel_lookup(frpe, 0, 40, Role::Key) == posenc::frpe_vector(40, 6));
  CHECK(posenc::rel_lookup(frpe, 50, 3, Role::Value) == posenc::frpe_vector(-47, 6));

  auto prpe = posenc::build_rel_table(16, 4, scheme_of(Scheme::Prpe, 2), 9);
  CHECK(posenc::rel_lookup(prpe, 0, 7, Role::Key) == posenc::rel_lookup(prpe, 0, 2, Role::Key));
  CHECK(posenc::rel_lookup(prpe, 9, 0, Role::Value) == posenc::rel_lookup(prpe, 2, 0, Role::Value));
  CHECK_FALSE(posenc::rel_lookup(prpe, 0, 1, Role::Key) == posenc::rel_lookup(prpe, 0, 2, Role::Key));
}

TEST_CASE("relative lookups depend on the offset only") {
  auto frpe = posenc::build_rel_table(16, 4, scheme_of(Scheme::Frpe), 0);
  auto prpe = posenc::build_rel_table(16, 4, scheme_of(Scheme::Prpe, 3), 1);
  for (long i = 0; i < 8; ++i)
    for (long j = 0; j < 8; ++j)
      for (long s : {1, 3, 7}) {
        CHECK(posenc::rel_lookup(frpe, i, j, Role::Key) == posenc::rel_lookup(frpe, i + s, j + s, Role::Key));
        CHECK(posenc::rel_lookup(prpe, i, j, Role::Value) == posenc::rel_lookup(prpe, i + s, j + s, Role::Value));
      }
}

TEST_CASE("absolute table") {
  const auto abs = posenc::build_abs_table(8, 4, 5);
  const auto row0 = posenc::pape_lookup(abs, 0);
  CHECK(std::vector<double>(row0.begin(), row0.end()) ==
        std::vector<double>(abs.table.row(0).begin(), abs.table.row(0).end()));
  CHECK_NOTHROW(posenc::pape_lookup(abs, 7));
  CHECK_THROWS_AS(posenc::pape_lookup(abs, 8), std::out_of_range);
}

TEST_CASE("one update with gradient on row 3 changes only row 3") {
  ParameterStore store;
  store.add("position", posenc::build_abs_table(8, 4, 5).table);
  const Tensor before = store[0].value;
  Gradients g = zero_gradients(store);
  for (std::size_t c = 0; c < 4; ++c) g[0](3, c) = 0.5 - double(c);
  optim::OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  optim::OptimizerState state(cfg, store);
  optim::lamb_step(state, store, g, 1e-2);
  for (std::size_t r = 0; r < 8; ++r) {
    bool same = true;
    for (std::size_t c = 0; c < 4; ++c) same = same && store[0].value(r, c) == before(r, c);
    CHECK(same == (r != 3));
  }
}

TEST_CASE("scheme validation") {
  CHECK_THROWS_AS(scheme_of(Scheme::Prpe, 0).validate(16), std::invalid_argument);
  CHECK_THROWS_AS(scheme_of(Scheme::Pape, 16, 15).validate(16), std::invalid_argument);
  CHECK_NOTHROW(scheme_of(Scheme::Pape, 16, 16).validate(16));
  CHECK(posenc::parse_scheme("frpe") == Scheme::Frpe);
  CHECK_THROWS_AS(posenc::parse_scheme("rope"), std::invalid_argument);
}

TEST_CASE("FRPE registers no parameters and its bank survives training updates") {
  encoder::EncoderConfig cfg;
  cfg.vocab_size = 32;
  cfg.hidden_size = 16;
  cfg.num_layers = 2;
  cfg.ffn_size = 32;
  cfg.max_seq_len = 16;
  cfg.encoding.kind = Scheme::Frpe;
  encoder::EncoderModel model(cfg, 1);
  for (const auto& p : model.params()) {
    CHECK(p.name.find("rel_") == std::string::npos);
    CHECK(p.name.find("position") == std::string::npos);
  }
  const Tensor bank = model.frpe_table().bank(Role::Key);

  optim::OptimizerState state(optim::OptimizerConfig{}, model.params());
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  for (int step = 0; step < 100; ++step) {
    Gradients g = zero_gradients(model.params());
    for (auto& t : g)
      for (double& x : t.values()) x = n(rng);
    optim::lamb_step(state, model.params(), g, 1e-3);
  }
  CHECK(model.frpe_table().bank(Role::Key) == bank);
  CHECK(model.frpe_table().bank(Role::Value) == bank);
}
