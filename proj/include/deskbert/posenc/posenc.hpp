#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deskbert/numerics/tensor.hpp"

namespace deskbert::posenc {

// FRPE: fixed sinusoids of the relative offset, injected in attention.
// PRPE: learned per-offset embeddings, offsets clipped to [-k, k].
// PAPE: learned absolute embedding added to the input tokens.
enum class Scheme { None, Frpe, Prpe, Pape };

std::string to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);

struct EncodingScheme {
  Scheme kind = Scheme::Frpe;
  int prpe_clip = 16;
  std::size_t max_position = 512;

  bool relative() const { return kind == Scheme::Frpe || kind == Scheme::Prpe; }
  // Throws std::invalid_argument when the settings cannot serve sequences of
  // `training_length`.
  void validate(std::size_t training_length) const;
};

enum class Role { Key, Value };

// Component 2k is sin(delta / 10000^(2k/d_z)), component 2k+1 the cosine.
std::vector<double> frpe_vector(long delta, std::size_t d_z);

// Per-offset vectors a_delta of length d_z. FRPE tables cover offsets
// [-(L-1), L-1] with one fixed bank serving both roles; PRPE tables hold
// separate learned key and value banks over clipped offsets [-k, k].
class RelPositionTable {
 public:
  RelPositionTable() = default;

  Scheme scheme() const { return scheme_; }
  bool fixed() const { return scheme_ == Scheme::Frpe; }
  std::size_t dim() const { return dim_; }
  // Largest |offset| with its own row.
  long reach() const { return reach_; }
  std::size_t rows() const { return static_cast<std::size_t>(2 * reach_ + 1); }

  // Bank row serving `delta`; PRPE clips, FRPE requires |delta| <= reach().
  std::size_t row_for(long delta) const;
  bool covers(long delta) const;

  const Tensor& bank(Role role) const;
  // Learned banks only.
  Tensor& mutable_bank(Role role);

  // FRPE only: recompute the bank to cover sequences of `max_len`. Never
  // shrinks.
  void ensure_length(std::size_t max_len);
  // FRPE copy grown to `max_len` (returns *this unchanged when it already
  // covers it).
  RelPositionTable extended(std::size_t max_len) const;

 private:
  friend RelPositionTable build_rel_table(std::size_t, std::size_t, const EncodingScheme&, std::uint64_t);

  Scheme scheme_ = Scheme::None;
  std::size_t dim_ = 0;
  long reach_ = 0;
  Tensor key_;
  Tensor value_;
};

RelPositionTable build_rel_table(std::size_t max_len, std::size_t d_z, const EncodingScheme& scheme,
                                 std::uint64_t seed);

// Encoding for the pair (i, j), offset j - i. FRPE lookups outside the built
// range grow the table first.
std::vector<double> rel_lookup(RelPositionTable& table, long i, long j, Role role);

struct AbsPositionTable {
  Tensor table;  // [max_position x width]

  std::size_t max_position() const { return table.rows(); }
};

AbsPositionTable build_abs_table(std::size_t max_position, std::size_t width, std::uint64_t seed);

// Throws std::out_of_range when pos >= max_position.
std::span<const double> pape_lookup(const AbsPositionTable& table, std::size_t pos);

// Zero-mean normal init used for every learned table.
Tensor normal_tensor(Shape shape, double stddev, std::uint64_t seed);

}  // namespace deskbert::posenc
