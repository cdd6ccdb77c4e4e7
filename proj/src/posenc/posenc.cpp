#include "deskbert/posenc/posenc.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <stdexcept>

namespace deskbert::posenc {

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::None: return "none";
    case Scheme::Frpe: return "frpe";
    case Scheme::Prpe: return "prpe";
    case Scheme::Pape: return "pape";
  }
  return "?";
}

Scheme parse_scheme(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "none") return Scheme::None;
  if (lower == "frpe") return Scheme::Frpe;
  if (lower == "prpe") return Scheme::Prpe;
  if (lower == "pape") return Scheme::Pape;
  throw std::invalid_argument("unknown encoding scheme '" + std::string(name) + "' (expected none|frpe|prpe|pape)");
}

void EncodingScheme::validate(std::size_t training_length) const {
  if (kind == Scheme::Prpe && prpe_clip < 1) throw std::invalid_argument("PRPE clip distance must be >= 1");
  if (kind == Scheme::Pape && max_position < training_length)
    throw std::invalid_argument("PAPE max position " + std::to_string(max_position) +
                                " is shorter than the training sequence length " + std::to_string(training_length));
}

std::vector<double> frpe_vector(long delta, std::size_t d_z) {
  if (d_z == 0 || d_z % 2 != 0)
    throw std::invalid_argument("frpe_vector: d_z must be even and positive, got " + std::to_string(d_z));
  std::vector<double> out(d_z);
  const double d = static_cast<double>(delta);
  for (std::size_t k = 0; k < d_z / 2; ++k) {
    const double wavelength = std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(d_z));
    const double angle = d / wavelength;
    out[2 * k] = std::sin(angle);
    out[2 * k + 1] = std::cos(angle);
  }
  return out;
}

namespace {

Tensor frpe_bank(long reach, std::size_t d_z) {
  Tensor bank({static_cast<std::size_t>(2 * reach + 1), d_z});
  for (long delta = -reach; delta <= reach; ++delta) {
    const auto v = frpe_vector(delta, d_z);
    std::copy(v.begin(), v.end(), bank.row(static_cast<std::size_t>(delta + reach)).begin());
  }
  return bank;
}

}  // namespace

Tensor normal_tensor(Shape shape, double stddev, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

std::size_t RelPositionTable::row_for(long delta) const {
  if (scheme_ == Scheme::Prpe) return static_cast<std::size_t>(std::clamp(delta, -reach_, reach_) + reach_);
  if (!covers(delta))
    throw std::out_of_range("FRPE table reach " + std::to_string(reach_) + " does not cover offset " +
                            std::to_string(delta));
  return static_cast<std::size_t>(delta + reach_);
}

bool RelPositionTable::covers(long delta) const {
  return scheme_ == Scheme::Prpe || (delta >= -reach_ && delta <= reach_);
}

const Tensor& RelPositionTable::bank(Role role) const {
  if (scheme_ == Scheme::Frpe) return key_;
  return role == Role::Key ? key_ : value_;
}

Tensor& RelPositionTable::mutable_bank(Role role) {
  if (fixed()) throw std::logic_error("FRPE tables are fixed");
  return role == Role::Key ? key_ : value_;
}

void RelPositionTable::ensure_length(std::size_t max_len) {
  if (scheme_ != Scheme::Frpe) return;
  const long reach = static_cast<long>(max_len) - 1;
  if (reach <= reach_) return;
  key_ = frpe_bank(reach, dim_);
  reach_ = reach;
}

RelPositionTable RelPositionTable::extended(std::size_t max_len) const {
  RelPositionTable copy = *this;
  copy.ensure_length(max_len);
  return copy;
}

RelPositionTable build_rel_table(std::size_t max_len, std::size_t d_z, const EncodingScheme& scheme,
                                 std::uint64_t seed) {
  if (max_len < 1) throw std::invalid_argument("build_rel_table: max_len must be >= 1");
  RelPositionTable table;
  table.dim_ = d_z;
  switch (scheme.kind) {
    case Scheme::Frpe:
      table.scheme_ = Scheme::Frpe;
      table.reach_ = static_cast<long>(max_len) - 1;
      table.key_ = frpe_bank(table.reach_, d_z);
      return table;
    case Scheme::Prpe: {
      if (scheme.prpe_clip < 1) throw std::invalid_argument("PRPE clip distance must be >= 1");
      table.scheme_ = Scheme::Prpe;
      table.reach_ = scheme.prpe_clip;
      const Shape shape{table.rows(), d_z};
      table.key_ = normal_tensor(shape, 0.02, seed);
      table.value_ = normal_tensor(shape, 0.02, seed ^ 0x9e3779b97f4a7c15ull);
      return table;
    }
    case Scheme::Pape:
    case Scheme::None:
      break;
  }
  throw std::invalid_argument("build_rel_table: scheme " + to_string(scheme.kind) + " has no relative table");
}

std::vector<double> rel_lookup(RelPositionTable& table, long i, long j, Role role) {
  const long delta = j - i;
  if (table.fixed() && !table.covers(delta)) table.ensure_length(static_cast<std::size_t>(std::abs(delta)) + 1);
  const auto row = table.bank(role).row(table.row_for(delta));
  return {row.begin(), row.end()};
}

AbsPositionTable build_abs_table(std::size_t max_position, std::size_t width, std::uint64_t seed) {
  if (max_position < 1) throw std::invalid_argument("build_abs_table: max_position must be >= 1");
  return {normal_tensor({max_position, width}, 0.02, seed)};
}

std::span<const double> pape_lookup(const AbsPositionTable& table, std::size_t pos) {
  if (pos >= table.max_position())
    throw std::out_of_range("absolute position " + std::to_string(pos) + " is outside the learned table (max position " +
                            std::to_string(table.max_position()) + ")");
  return table.table.row(pos);
}

}  // namespace deskbert::posenc
