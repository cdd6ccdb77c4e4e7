#pragma once

// Independent reference implementations shared by the unit and acceptance
// tests. Nothing here calls into the library's numerics beyond reading
// tensors, so a bug in the library cannot leak into its own oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "deskbert/attention/attention.hpp"
#include "deskbert/numerics/tensor.hpp"
#include "deskbert/posenc/posenc.hpp"

namespace oracle {

using deskbert::Tensor;

// Component c of the fixed relative vector for offset delta, through
// exp/log in extended precision.
inline double frpe_component(long delta, std::size_t c, std::size_t d_z) {
  const long double inv_wavelength = expl(-(2.0L * (c / 2) / d_z) * logl(10000.0L));
  const long double angle = static_cast<long double>(delta) * inv_wavelength;
  return static_cast<double>(c % 2 == 0 ? sinl(angle) : cosl(angle));
}

// Relative term for one head: FRPE computed on the spot, PRPE read from
// [2k+1 x d_z] banks with the offset clipped to [-k, k].
struct Relative {
  deskbert::posenc::Scheme scheme = deskbert::posenc::Scheme::None;
  const Tensor* key_bank = nullptr;
  const Tensor* value_bank = nullptr;
  long clip = 0;

  bool active() const {
    return scheme == deskbert::posenc::Scheme::Frpe || scheme == deskbert::posenc::Scheme::Prpe;
  }
  double at(long delta, std::size_t c, std::size_t d_z, bool value_role) const {
    if (scheme == deskbert::posenc::Scheme::Frpe) return frpe_component(delta, c, d_z);
    const long d = std::clamp(delta, -clip, clip);
    const Tensor& bank = value_role ? *value_bank : *key_bank;
    return bank(static_cast<std::size_t>(d + clip), c);
  }
};

// Multi-head self-attention written out term by term:
//   q = x W^Q, k = x W^K, v = x W^V (head h owns columns h*d_z .. (h+1)*d_z)
//   e_ij = sum_c q_ic (k_jc + aK_{j-i,c}) / sqrt(d_z), -1e9 on masked j
//   alpha_ij = exp(e_ij) / sum_j' exp(e_ij')
//   z_ic = sum_j alpha_ij (v_jc + aV_{j-i,c})
//   out = concat_h(z) W^O + b
inline Tensor multi_head_attention(const Tensor& x, const deskbert::attention::HeadWeights& w, std::size_t heads,
                                   const Relative& rel, const std::vector<bool>& mask = {}) {
  const std::size_t n = x.rows(), dm = x.cols(), dz = dm / heads;
  auto project = [&](const Tensor& W, std::size_t i, std::size_t col) {
    double s = 0;
    for (std::size_t r = 0; r < dm; ++r) s += x(i, r) * W(r, col);
    return s;
  };
  Tensor concat({n, dm});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> e(n);
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < dz; ++c) {
          const double q = project(w.query, i, h * dz + c);
          double k = project(w.key, j, h * dz + c);
          if (rel.active()) k += rel.at(long(j) - long(i), c, dz, false);
          s += q * k;
        }
        e[j] = s / std::sqrt(double(dz)) + (mask.empty() || mask[j] ? 0.0 : -1e9);
      }
      const double peak = *std::max_element(e.begin(), e.end());
      double total = 0;
      for (double& v : e) {
        v = std::exp(v - peak);
        total += v;
      }
      for (std::size_t c = 0; c < dz; ++c) {
        double z = 0;
        for (std::size_t j = 0; j < n; ++j) {
          double v = project(w.value, j, h * dz + c);
          if (rel.active()) v += rel.at(long(j) - long(i), c, dz, true);
          z += e[j] / total * v;
        }
        concat(i, h * dz + c) = z;
      }
    }
  }
  Tensor out({n, dm});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dm; ++c) {
      double s = w.output_bias[c];
      for (std::size_t r = 0; r < dm; ++r) s += concat(i, r) * w.output(r, c);
      out(i, c) = s;
    }
  return out;
}

// binary16 decoded straight from the bit layout.
inline double decode_half(std::uint16_t bits) {
  const int sign = bits >> 15, exponent = (bits >> 10) & 0x1f, mantissa = bits & 0x3ff;
  double v;
  if (exponent == 0)
    v = std::ldexp(double(mantissa), -24);
  else if (exponent == 31)
    v = mantissa ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  else
    v = std::ldexp(1024.0 + mantissa, exponent - 25);
  return sign ? -v : v;
}

struct HalfGrid {
  std::vector<double> values;       // finite non-negative, ascending
  std::vector<bool> even_mantissa;  // last bit of the encoding is 0
};

inline const HalfGrid& half_grid() {
  static const HalfGrid g = [] {
    HalfGrid h;
    for (std::uint32_t b = 0; b < 0x7c00; ++b) {
      h.values.push_back(decode_half(std::uint16_t(b)));
      h.even_mantissa.push_back((b & 1) == 0);
    }
    return h;
  }();
  return g;
}

// Nearest binary16 by search over the enumerated grid, ties to even.
inline double nearest_half(double x) {
  if (std::isnan(x)) return x;
  const auto& g = half_grid();
  const double a = std::fabs(x);
  double r;
  // Past max + half an ulp everything overflows.
  if (a >= 65520.0) {
    r = std::numeric_limits<double>::infinity();
  } else {
    const auto hi = std::lower_bound(g.values.begin(), g.values.end(), a);
    if (hi == g.values.end()) {
      r = g.values.back();
    } else if (*hi == a || hi == g.values.begin()) {
      r = *hi;
    } else {
      const auto lo = hi - 1;
      const double dl = a - *lo, dh = *hi - a;
      if (dl < dh)
        r = *lo;
      else if (dh < dl)
        r = *hi;
      else
        r = g.even_mantissa[std::size_t(lo - g.values.begin())] ? *lo : *hi;
    }
  }
  return std::signbit(x) ? -r : r;
}

}  // namespace oracle
