#include "deskbert/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "deskbert/optim/half.hpp"

namespace deskbert {

// ---------------------------------------------------------------------------
// ParameterStore

std::size_t ParameterStore::add(std::string name, Tensor value, bool exempt) {
  if (contains(name)) throw std::invalid_argument("parameter registered twice: " + name);
  params_.push_back({std::move(name), std::move(value), exempt});
  return params_.size() - 1;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw std::out_of_range("unknown parameter: " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Gradients zero_gradients(const ParameterStore& store) {
  Gradients g;
  g.reserve(store.size());
  for (const auto& p : store) g.emplace_back(p.value.shape());
  return g;
}

void accumulate(Gradients& into, const Gradients& from, double weight) {
  if (into.size() != from.size()) throw std::invalid_argument("accumulate: gradient sets differ in size");
  for (std::size_t i = 0; i < into.size(); ++i) {
    auto dst = into[i].values();
    auto src = from[i].values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += weight * src[j];
  }
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(const ParameterStore& store, std::size_t index) {
  if (store_ == nullptr) {
    store_ = &store;
    param_nodes_.assign(store.size(), -1);
  } else if (store_ != &store) {
    throw std::invalid_argument("tape already bound to a different parameter store");
  }
  if (index >= store.size()) throw std::out_of_range("parameter index out of range");
  if (param_nodes_[index] >= 0) return {this, param_nodes_[index]};
  Node n;
  n.ref = &store[index].value;
  n.needs_grad = true;
  n.param_index = static_cast<std::int64_t>(index);
  nodes_.push_back(std::move(n));
  param_nodes_[index] = static_cast<int>(nodes_.size() - 1);
  return {this, param_nodes_[index]};
}

Var Tape::record(Tensor value, bool needs_grad, BackwardFn fn) {
  round(value);
  Node n;
  n.owned = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.owned;
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (!n.grad_live) {
    n.grad = Tensor(value(id).shape());
    n.grad_live = true;
  }
  return n.grad;
}

void Tape::round(Tensor& t) const {
  if (emulate_half_) optim::round_half(t);
}

void Tape::backward(Var root, double seed) {
  if (root.tape_ != this) throw std::invalid_argument("backward: variable belongs to another tape");
  if (value(root.id_).size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!nodes_[root.id_].needs_grad) return;
  grad(root.id_)[0] = seed;
  for (int id = root.id_; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_live) continue;
    if (emulate_half_) optim::round_half(n.grad);
    ++backward_visits_;
    if (n.fn) {
      auto fn = std::move(n.fn);
      fn(*this, id);
    }
  }
}

void Tape::collect(const ParameterStore& store, Gradients& out) const {
  if (store_ == nullptr) return;
  if (&store != store_) throw std::invalid_argument("collect: tape bound to a different parameter store");
  if (out.size() != store.size()) throw std::invalid_argument("collect: gradient set not aligned with store");
  for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
    const int id = param_nodes_[i];
    if (id < 0 || !nodes_[id].grad_live) continue;
    auto dst = out[i].values();
    auto src = nodes_[id].grad.values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace ad {
namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
  return *a.tape();
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.record(deskbert::matmul(a.value(), b.value()), ng, [a, b](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    if (tape.needs_grad(a)) add_into(tape.grad(a.id()), deskbert::matmul_nt(g, b.value()));
    if (tape.needs_grad(b)) add_into(tape.grad(b.id()), deskbert::matmul_tn(a.value(), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.record(deskbert::matmul_nt(a.value(), b.value()), ng, [a, b](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    if (tape.needs_grad(a)) add_into(tape.grad(a.id()), deskbert::matmul(g, b.value()));
    if (tape.needs_grad(b)) add_into(tape.grad(b.id()), deskbert::matmul_tn(g, a.value()));
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument("add: shape " + shape_string(a.value().shape()) + " vs " +
                                shape_string(b.value().shape()));
  Tensor out = a.value();
  add_into(out, b.value());
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  return t.record(std::move(out), ng, [a, b](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    if (tape.needs_grad(a)) add_into(tape.grad(a.id()), g);
    if (tape.needs_grad(b)) add_into(tape.grad(b.id()), g);
  });
}

Var add_bias(Var x, Var bias) {
  Tape& t = same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols())
    throw std::invalid_argument("add_bias: bias length " + std::to_string(bv.size()) + " vs width " +
                                std::to_string(xv.cols()));
  Tensor out = xv;
  const std::size_t width = xv.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % width];
  const bool ng = t.needs_grad(x) || t.needs_grad(bias);
  return t.record(std::move(out), ng, [x, bias, width](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    if (tape.needs_grad(x)) add_into(tape.grad(x.id()), g);
    if (tape.needs_grad(bias)) {
      Tensor& gb = tape.grad(bias.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % width] += g[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tape& t = *x.tape();
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  return t.record(std::move(out), t.needs_grad(x), [x, factor](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    Tensor& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

Var gelu(Var x) {
  Tape& t = *x.tape();
  return t.record(deskbert::gelu(x.value()), t.needs_grad(x), [x](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    const Tensor& xv = x.value();
    Tensor& gx = tape.grad(x.id());
    constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double d = standard_normal_cdf(v) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * d;
    }
  });
}

Var tanh(Var x) {
  Tape& t = *x.tape();
  Tensor out = x.value();
  for (double& v : out.values()) v = std::tanh(v);
  return t.record(std::move(out), t.needs_grad(x), [x](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    const Tensor& y = tape.value(self);
    Tensor& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& xv = x.value();
  const Tensor& gv = gamma.value();
  const std::size_t width = xv.cols();
  const std::size_t rows = xv.size() / width;
  if (gv.size() != width || beta.value().size() != width)
    throw std::invalid_argument("layer_norm: gamma/beta length must equal last axis " + std::to_string(width));

  // Normalized activations and inverse deviations are kept for backward.
  Tensor normed(xv.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * width;
    double mean = 0.0;
    for (std::size_t c = 0; c < width; ++c) mean += in[c];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(width);
    const double denom = std::sqrt(var + eps);
    inv_std[r] = denom > 0.0 ? 1.0 / denom : 0.0;
    for (std::size_t c = 0; c < width; ++c) normed[r * width + c] = (in[c] - mean) * inv_std[r];
  }
  t.round(normed);
  Tensor out(xv.shape());
  const Tensor& bv = beta.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = normed[i] * gv[i % width] + bv[i % width];

  const bool ng = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  return t.record(std::move(out), ng,
                  [x, gamma, beta, normed = std::move(normed), inv_std = std::move(inv_std), width, rows](
                      Tape& tape, int self) {
                    const Tensor& g = tape.grad(self);
                    if (tape.needs_grad(gamma)) {
                      Tensor& gg = tape.grad(gamma.id());
                      for (std::size_t i = 0; i < g.size(); ++i) gg[i % width] += g[i] * normed[i];
                    }
                    if (tape.needs_grad(beta)) {
                      Tensor& gb = tape.grad(beta.id());
                      for (std::size_t i = 0; i < g.size(); ++i) gb[i % width] += g[i];
                    }
                    if (!tape.needs_grad(x)) return;
                    const Tensor& gv = gamma.value();
                    Tensor& gx = tape.grad(x.id());
                    const double n = static_cast<double>(width);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double mean_dn = 0.0, mean_dn_n = 0.0;
                      for (std::size_t c = 0; c < width; ++c) {
                        const double dn = g[r * width + c] * gv[c];
                        mean_dn += dn;
                        mean_dn_n += dn * normed[r * width + c];
                      }
                      mean_dn /= n;
                      mean_dn_n /= n;
                      for (std::size_t c = 0; c < width; ++c) {
                        const double dn = g[r * width + c] * gv[c];
                        gx[r * width + c] += inv_std[r] * (dn - mean_dn - normed[r * width + c] * mean_dn_n);
                      }
                    }
                  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  Tape& t = *table.tape();
  const Tensor& tv = table.value();
  const std::size_t width = tv.cols();
  if (ids.empty()) throw std::invalid_argument("gather_rows: no ids");
  Tensor out({ids.size(), width});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows())
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " at index " + std::to_string(i) +
                              " exceeds table size " + std::to_string(tv.rows()));
    std::copy_n(tv.data() + ids[i] * width, width, out.data() + i * width);
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return t.record(std::move(out), t.needs_grad(table), [table, idv = std::move(idv), width](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    Tensor& gt = tape.grad(table.id());
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t c = 0; c < width; ++c) gt[idv[i] * width + c] += g[i * width + c];
  });
}

Var select_rows(Var x, std::span<const std::size_t> rows) { return gather_rows(x, rows); }

Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  Tape& t = *x.tape();
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor mask(x.value().shape());
  const double inv = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = keep(rng) ? inv : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return t.record(std::move(out), t.needs_grad(x), [x, mask = std::move(mask)](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    Tensor& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Var sum(Var x) {
  Tape& t = *x.tape();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return t.record(Tensor({1}, {s}), t.needs_grad(x), [x](Tape& tape, int self) {
    const double g = tape.grad(self)[0];
    for (double& v : tape.grad(x.id()).values()) v += g;
  });
}

Var sum_squares(Var x) {
  Tape& t = *x.tape();
  double s = 0.0;
  for (double v : x.value().values()) s += v * v;
  return t.record(Tensor({1}, {s}), t.needs_grad(x), [x](Tape& tape, int self) {
    const double g = tape.grad(self)[0];
    const Tensor& xv = x.value();
    Tensor& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * g * xv[i];
  });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape();
  const std::size_t axis = x.value().rank() - 1;
  return t.record(deskbert::softmax(x.value(), axis), t.needs_grad(x), [x](Tape& tape, int self) {
    const Tensor& g = tape.grad(self);
    const Tensor& y = tape.value(self);
    Tensor& gx = tape.grad(x.id());
    const std::size_t width = y.cols();
    for (std::size_t r = 0; r < y.size() / width; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < width; ++c) dot += g[r * width + c] * y[r * width + c];
      for (std::size_t c = 0; c < width; ++c) gx[r * width + c] += y[r * width + c] * (g[r * width + c] - dot);
    }
  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  Tape& t = *logits.tape();
  const Tensor& lv = logits.value();
  const std::size_t width = lv.cols();
  const std::size_t rows = lv.size() / width;
  if (labels.size() != rows)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(rows) + " rows");
  Tensor probs = deskbert::softmax(lv, lv.rank() - 1);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= width) throw std::out_of_range("cross_entropy: label out of range at row " + std::to_string(r));
    const double* row = lv.data() + r * width;
    const double peak = *std::max_element(row, row + width);
    double total = 0.0;
    for (std::size_t c = 0; c < width; ++c) total += std::exp(row[c] - peak);
    loss += peak + std::log(total) - row[labels[r]];
  }
  loss /= static_cast<double>(rows);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return t.record(Tensor({1}, {loss}), t.needs_grad(logits),
                  [logits, probs = std::move(probs), lab = std::move(lab), width, rows](Tape& tape, int self) {
                    const double g = tape.grad(self)[0] / static_cast<double>(rows);
                    Tensor& gl = tape.grad(logits.id());
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < width; ++c)
                        gl[r * width + c] += g * (probs[r * width + c] - (c == lab[r] ? 1.0 : 0.0));
                  });
}

}  // namespace ad
}  // namespace deskbert
