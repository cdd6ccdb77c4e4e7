#include "deskbert/optim/half.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include "deskbert/numerics/tensor.hpp"

namespace deskbert::optim {

std::uint16_t to_half_bits(double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  const auto sign = static_cast<std::uint16_t>((bits >> 48) & 0x8000u);
  const int exp = static_cast<int>((bits >> 52) & 0x7ffu);
  std::uint64_t mant = bits & 0x000fffffffffffffull;

  if (exp == 0x7ff) {
    if (mant != 0) return static_cast<std::uint16_t>(sign | 0x7e00u);  // quiet NaN
    return static_cast<std::uint16_t>(sign | 0x7c00u);
  }

  // Unbiased exponent of the double; binary16 normals cover [-14, 15].
  const int e = exp - 1023;
  if (e > 15) return static_cast<std::uint16_t>(sign | 0x7c00u);

  if (exp == 0) return sign;  // double subnormals are far below half's range

  // 53-bit significand with the implicit bit.
  mant |= 0x0010000000000000ull;

  int half_exp;
  int shift;  // number of low significand bits to discard
  if (e >= -14) {
    half_exp = e + 15;
    shift = 52 - 10;
  } else {
    // Subnormal result: value = m * 2^-24 with m < 1024.
    half_exp = 0;
    shift = 52 - 10 + (-14 - e);
    if (shift > 53 + 1) return sign;  // below half of the smallest subnormal
  }

  std::uint64_t kept = mant >> shift;
  const std::uint64_t rest = mant & ((std::uint64_t{1} << shift) - 1);
  const std::uint64_t halfway = std::uint64_t{1} << (shift - 1);
  if (rest > halfway || (rest == halfway && (kept & 1u))) ++kept;

  if (half_exp == 0) {
    // kept may have carried into the normal range (0x400), which encodes
    // correctly as exponent 1 with a zero fraction.
    return static_cast<std::uint16_t>(sign | kept);
  }
  // Normal: kept holds 11 bits including the implicit one, or 12 on carry.
  if (kept & 0x800u) {
    kept >>= 1;
    ++half_exp;
  }
  if (half_exp >= 31) return static_cast<std::uint16_t>(sign | 0x7c00u);
  return static_cast<std::uint16_t>(sign | (half_exp << 10) | (kept & 0x3ffu));
}

double from_half_bits(std::uint16_t bits) {
  const bool negative = bits & 0x8000u;
  const int exp = (bits >> 10) & 0x1f;
  const int frac = bits & 0x3ff;
  double value;
  if (exp == 0) {
    value = std::ldexp(static_cast<double>(frac), -24);
  } else if (exp == 31) {
    value = frac ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  } else {
    value = std::ldexp(static_cast<double>(frac | 0x400), exp - 25);
  }
  return negative ? -value : value;
}

double round_half(double x) {
  if (std::isnan(x)) return x;
  return from_half_bits(to_half_bits(x));
}

void round_half(Tensor& t) {
  for (double& v : t.values()) v = round_half(v);
}

}  // namespace deskbert::optim
