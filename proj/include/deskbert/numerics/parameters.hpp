#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "deskbert/numerics/tensor.hpp"

namespace deskbert {

struct Parameter {
  std::string name;
  Tensor value;
  // Layer-norm scales/shifts and biases: exempt from weight decay and from
  // the LAMB trust ratio when the optimizer's exclusion list is enabled.
  bool exempt = false;
};

// Ordered set of named trainable tensors. Registration order is the
// serialization order in checkpoints.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value, bool exempt = false);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;
  Tensor& value(const std::string& name) { return params_[index_of(name)].value; }
  const Tensor& value(const std::string& name) const { return params_[index_of(name)].value; }

  std::size_t total_elements() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

// One gradient tensor per registered parameter, same order and shapes.
using Gradients = std::vector<Tensor>;

Gradients zero_gradients(const ParameterStore& store);
void accumulate(Gradients& into, const Gradients& from, double weight = 1.0);

}  // namespace deskbert
