#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace deskbert {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Rank 1 and 2 cover everything the
// encoder needs; higher ranks are only used by the generic reductions.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Leading extent for matrices; 1 for vectors.
  std::size_t rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }
  // Trailing extent.
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(double value);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws std::invalid_argument naming the first non-finite entry.
void require_finite(const Tensor& t, const char* what);
bool all_finite(const Tensor& t);

double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(std::span<const double> values);

// out = a * b for matrices [n x k] * [k x m].
Tensor matmul(const Tensor& a, const Tensor& b);
// out = a * b^T for [n x k] * [m x k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// out = a^T * b for [k x n] * [k x m].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Numerically stable softmax along `axis`. Non-finite input is rejected with
// an error naming the flat index of the offending entry.
Tensor softmax(const Tensor& logits, std::size_t axis);

double standard_normal_cdf(double x);
double gelu(double x);
Tensor gelu(const Tensor& x);

// Post-affine layer normalization over the last axis using the population
// variance.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-12);

}  // namespace deskbert
