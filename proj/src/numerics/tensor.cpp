#include "deskbert/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace deskbert {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto extent : shape_)
    if (extent == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto extent : shape_)
    if (extent == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_string(shape_));
  if (shape_size(shape_) != data_.size())
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_string(shape_));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_finite(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i]))
      throw std::invalid_argument(std::string(what) + ": non-finite value at index " + std::to_string(i));
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_abs_diff: shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double l2_norm(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum);
}

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k)
    throw std::invalid_argument("matmul: inner extents differ " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    const double* ar = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ar[p];
      const double* br = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += s * br[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k)
    throw std::invalid_argument("matmul_nt: inner extents differ " + shape_string(a.shape()) + " * " +
                                shape_string(b.shape()) + "^T");
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* br = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      out(i, j) = s;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  if (b.rows() != k)
    throw std::invalid_argument("matmul_tn: inner extents differ " + shape_string(a.shape()) + "^T * " +
                                shape_string(b.shape()));
  Tensor out({n, m});
  for (std::size_t p = 0; p < k; ++p) {
    const double* ar = a.data() + p * n;
    const double* br = b.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = ar[i];
      double* o = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += s * br[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor softmax(const Tensor& logits, std::size_t axis) {
  if (axis >= logits.rank())
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " +
                                shape_string(logits.shape()));
  require_finite(logits, "softmax");
  const auto& shape = logits.shape();
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t extent = shape[axis];
  const std::size_t outer = logits.size() / (extent * inner);

  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * extent * inner + in;
      double peak = logits[base];
      for (std::size_t e = 1; e < extent; ++e) peak = std::max(peak, logits[base + e * inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < extent; ++e) {
        const double v = std::exp(logits[base + e * inner] - peak);
        out[base + e * inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < extent; ++e) out[base + e * inner] /= total;
    }
  }
  return out;
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double gelu(double x) { return x * standard_normal_cdf(x); }

Tensor gelu(const Tensor& x) {
  require_finite(x, "gelu");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t width = x.cols();
  if (gamma.size() != width || beta.size() != width)
    throw std::invalid_argument("layer_norm: gamma/beta length must equal last axis " + std::to_string(width));
  if (eps < 0.0) throw std::invalid_argument("layer_norm: eps must be non-negative");
  Tensor out(x.shape());
  const std::size_t rows = x.size() / width;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * width;
    double mean = 0.0;
    for (std::size_t c = 0; c < width; ++c) mean += in[c];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(width);
    const double denom = std::sqrt(var + eps);
    double* o = out.data() + r * width;
    for (std::size_t c = 0; c < width; ++c) {
      // A constant row with eps == 0 normalizes to zero rather than NaN.
      const double centered = in[c] - mean;
      const double normed = denom > 0.0 ? centered / denom : 0.0;
      o[c] = normed * gamma[c] + beta[c];
    }
  }
  return out;
}

}  // namespace deskbert
