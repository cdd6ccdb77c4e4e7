#pragma once

#include <cstdint>

namespace deskbert {
class Tensor;
}

namespace deskbert::optim {

// IEEE-754 binary16 encoding of `x`, rounded to nearest with ties to even.
// Rounds directly from the double (no intermediate float step). Overflow
// goes to infinity, subnormals are produced, NaN stays NaN.
std::uint16_t to_half_bits(double x);
double from_half_bits(std::uint16_t bits);

// Nearest binary16 value, re-widened to double.
double round_half(double x);
void round_half(Tensor& t);

inline constexpr double kHalfMax = 65504.0;

}  // namespace deskbert::optim
