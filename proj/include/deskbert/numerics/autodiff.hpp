#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "deskbert/numerics/parameters.hpp"
#include "deskbert/numerics/tensor.hpp"

namespace deskbert {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode gradient tape. Nodes are recorded in evaluation order and
// replayed backwards; every node with a live gradient is visited once.
//
// With half emulation enabled, every recorded output and every completed
// node gradient is rounded to the nearest binary16 value. Parameter leaves
// are read as-is, so callers pass an already-rounded working copy.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(bool emulate_half = false) : emulate_half_(emulate_half) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Non-owning constant; `value` must outlive the tape.
  Var constant_ref(const Tensor& value);
  // Leaf bound to a store entry. Repeated calls return the same node.
  Var param(const ParameterStore& store, std::size_t index);

  // Records an op output. `fn` is dropped when `needs_grad` is false.
  Var record(Tensor value, bool needs_grad, BackwardFn fn);

  const Tensor& value(int id) const;
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  // Gradient buffer of a node, zero-initialized on first access.
  Tensor& grad(int id);
  bool has_grad(int id) const { return nodes_[id].grad_live; }

  void backward(Var root, double seed = 1.0);

  // Adds leaf gradients into `out`, which must be aligned with `store`.
  void collect(const ParameterStore& store, Gradients& out) const;

  bool emulate_half() const { return emulate_half_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t backward_visits() const { return backward_visits_; }

  // Applies the emulation rounding to an intermediate (no-op when disabled).
  void round(Tensor& t) const;

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool grad_live = false;
    bool needs_grad = false;
    std::int64_t param_index = -1;
    BackwardFn fn;
  };

  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
  const ParameterStore* store_ = nullptr;
  bool emulate_half_ = false;
  std::size_t backward_visits_ = 0;
};

namespace ad {

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
// Adds a length-m vector to every row of an [n x m] matrix.
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
Var gelu(Var x);
Var tanh(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps);
// Rows of `table` selected by `ids`; out-of-range ids throw with their index.
Var gather_rows(Var table, std::span<const std::size_t> ids);
Var select_rows(Var x, std::span<const std::size_t> rows);
// Inverted dropout; identity when rate == 0.
Var dropout(Var x, double rate, std::mt19937_64& rng);
Var sum(Var x);
Var sum_squares(Var x);
Var softmax_rows(Var x);
// Mean over rows of -log softmax(logits)[row, label]. Returns shape {1}.
Var cross_entropy(Var logits, std::span<const std::size_t> labels);

}  // namespace ad
}  // namespace deskbert
