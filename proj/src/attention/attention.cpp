#include "deskbert/attention/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace deskbert::attention {

void AttentionConfig::validate() const {
  if (num_heads == 0 || d_model % num_heads != 0)
    throw std::invalid_argument("d_model " + std::to_string(d_model) + " is not divisible by " +
                                std::to_string(num_heads) + " heads");
  if (scheme == posenc::Scheme::Frpe && head_dim() % 2 != 0)
    throw std::invalid_argument("FRPE needs an even per-head size, got " + std::to_string(head_dim()));
  if (prob_dropout < 0.0 || prob_dropout >= 1.0) throw std::invalid_argument("attention dropout must be in [0, 1)");
}

HeadWeights init_head_weights(std::size_t d_model, std::uint64_t seed) {
  return {
      posenc::normal_tensor({d_model, d_model}, 0.02, seed + 1),
      posenc::normal_tensor({d_model, d_model}, 0.02, seed + 2),
      posenc::normal_tensor({d_model, d_model}, 0.02, seed + 3),
      posenc::normal_tensor({d_model, d_model}, 0.02, seed + 4),
      Tensor({d_model}),
  };
}

namespace {

std::vector<double> rel_row(const posenc::RelPositionTable& table, long delta, posenc::Role role) {
  if (table.fixed() && !table.covers(delta)) return posenc::frpe_vector(delta, table.dim());
  const auto row = table.bank(role).row(table.row_for(delta));
  return {row.begin(), row.end()};
}

void check_mask(std::span<const bool> mask, std::size_t n) {
  if (!mask.empty() && mask.size() != n)
    throw std::invalid_argument("attention mask length " + std::to_string(mask.size()) + " vs sequence length " +
                                std::to_string(n));
}

}  // namespace

Tensor attention_scores(const Tensor& q, const Tensor& k, const posenc::RelPositionTable* table,
                        std::span<const bool> mask) {
  if (q.rank() != 2 || k.rank() != 2 || !q.same_shape(k))
    throw std::invalid_argument("attention_scores: q " + shape_string(q.shape()) + " and k " +
                                shape_string(k.shape()) + " must be equal-shaped matrices");
  const std::size_t n = q.rows(), dz = q.cols();
  if (table && table->dim() != dz)
    throw std::invalid_argument("attention_scores: table width " + std::to_string(table->dim()) + " vs d_z " +
                                std::to_string(dz));
  check_mask(mask, n);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dz));
  Tensor e({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      if (table) {
        const auto a = rel_row(*table, static_cast<long>(j) - static_cast<long>(i), posenc::Role::Key);
        for (std::size_t d = 0; d < dz; ++d) s += q(i, d) * (k(j, d) + a[d]);
      } else {
        for (std::size_t d = 0; d < dz; ++d) s += q(i, d) * k(j, d);
      }
      e(i, j) = s * inv + (mask.empty() || mask[j] ? 0.0 : kMaskedScore);
    }
  }
  return e;
}

Tensor attention_output(const Tensor& alpha, const Tensor& v, const posenc::RelPositionTable* table) {
  if (alpha.rank() != 2 || v.rank() != 2 || alpha.rows() != alpha.cols() || alpha.cols() != v.rows())
    throw std::invalid_argument("attention_output: alpha " + shape_string(alpha.shape()) + " incompatible with v " +
                                shape_string(v.shape()));
  const std::size_t n = v.rows(), dz = v.cols();
  if (table && table->dim() != dz)
    throw std::invalid_argument("attention_output: table width " + std::to_string(table->dim()) + " vs d_z " +
                                std::to_string(dz));
  Tensor z({n, dz});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = alpha(i, j);
      if (table) {
        const auto a = rel_row(*table, static_cast<long>(j) - static_cast<long>(i), posenc::Role::Value);
        for (std::size_t d = 0; d < dz; ++d) z(i, d) += w * (v(j, d) + a[d]);
      } else {
        for (std::size_t d = 0; d < dz; ++d) z(i, d) += w * v(j, d);
      }
    }
  }
  return z;
}

RelativeBanks bind_table(Tape& tape, const posenc::RelPositionTable& table) {
  RelativeBanks banks;
  banks.reach = table.reach();
  banks.key = tape.constant_ref(table.bank(posenc::Role::Key));
  banks.value = table.fixed() ? banks.key : tape.constant_ref(table.bank(posenc::Role::Value));
  return banks;
}

Var relative_attention(Var q, Var k, Var v, std::size_t num_heads, const RelativeBanks* rel,
                       std::span<const bool> mask, double prob_dropout, std::mt19937_64* rng) {
  Tape& tape = *q.tape();
  if (k.tape() != &tape || v.tape() != &tape) throw std::invalid_argument("relative_attention: mixed tapes");
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (qv.rank() != 2 || !qv.same_shape(kv) || !qv.same_shape(vv))
    throw std::invalid_argument("relative_attention: q/k/v must be equal-shaped matrices, got " +
                                shape_string(qv.shape()) + ", " + shape_string(kv.shape()) + ", " +
                                shape_string(vv.shape()));
  const std::size_t n = qv.rows(), width = qv.cols();
  if (num_heads == 0 || width % num_heads != 0)
    throw std::invalid_argument("relative_attention: width not divisible by head count");
  const std::size_t dz = width / num_heads;
  check_mask(mask, n);

  const Tensor* bank_k = nullptr;
  const Tensor* bank_v = nullptr;
  long reach = 0;
  if (rel) {
    bank_k = &rel->key.value();
    bank_v = &rel->value.value();
    reach = rel->reach;
    if (bank_k->cols() != dz || bank_v->cols() != dz)
      throw std::invalid_argument("relative_attention: table width " + std::to_string(bank_k->cols()) +
                                  " vs per-head size " + std::to_string(dz));
    if (bank_k->rows() != static_cast<std::size_t>(2 * reach + 1) || bank_v->rows() != bank_k->rows())
      throw std::invalid_argument("relative_attention: bank rows do not match reach");
  }
  // Offset rows are clipped; an FRPE bank is always bound with enough reach.
  std::vector<std::size_t> row_of(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      row_of[i * n + j] = static_cast<std::size_t>(
          std::clamp(static_cast<long>(j) - static_cast<long>(i), -reach, reach) + reach);

  const double inv = 1.0 / std::sqrt(static_cast<double>(dz));
  // alpha[h][i*n+j]: post-softmax weights; keep[h][...]: dropout multipliers.
  std::vector<double> alpha(num_heads * n * n);
  std::vector<double> keep;
  if (prob_dropout > 0.0) {
    if (rng == nullptr) throw std::invalid_argument("relative_attention: dropout needs an rng");
    keep.resize(alpha.size());
    std::bernoulli_distribution coin(1.0 - prob_dropout);
    for (double& m : keep) m = coin(*rng) ? 1.0 / (1.0 - prob_dropout) : 0.0;
  }

  Tensor z({n, width});
  std::vector<double> row(n);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t c0 = h * dz;
    double* a = alpha.data() + h * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double* qi = qv.data() + i * width + c0;
      for (std::size_t j = 0; j < n; ++j) {
        const double* kj = kv.data() + j * width + c0;
        double s = 0.0;
        if (bank_k) {
          const double* ak = bank_k->data() + row_of[i * n + j] * dz;
          for (std::size_t d = 0; d < dz; ++d) s += qi[d] * (kj[d] + ak[d]);
        } else {
          for (std::size_t d = 0; d < dz; ++d) s += qi[d] * kj[d];
        }
        row[j] = s * inv + (mask.empty() || mask[j] ? 0.0 : kMaskedScore);
      }
      if (tape.emulate_half()) {
        Tensor tmp({n}, row);
        tape.round(tmp);
        std::copy(tmp.values().begin(), tmp.values().end(), row.begin());
      }
      const double peak = *std::max_element(row.begin(), row.end());
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - peak);
        total += row[j];
      }
      for (std::size_t j = 0; j < n; ++j) a[i * n + j] = row[j] / total;
    }
    if (tape.emulate_half()) {
      Tensor tmp({n * n}, std::vector<double>(a, a + n * n));
      tape.round(tmp);
      std::copy(tmp.values().begin(), tmp.values().end(), a);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double* zi = z.data() + i * width + c0;
      for (std::size_t j = 0; j < n; ++j) {
        const double w = a[i * n + j] * (keep.empty() ? 1.0 : keep[h * n * n + i * n + j]);
        const double* vj = vv.data() + j * width + c0;
        if (bank_v) {
          const double* av = bank_v->data() + row_of[i * n + j] * dz;
          for (std::size_t d = 0; d < dz; ++d) zi[d] += w * (vj[d] + av[d]);
        } else {
          for (std::size_t d = 0; d < dz; ++d) zi[d] += w * vj[d];
        }
      }
    }
  }

  const bool rel_grad = rel && (tape.needs_grad(rel->key) || tape.needs_grad(rel->value));
  const bool ng = tape.needs_grad(q) || tape.needs_grad(k) || tape.needs_grad(v) || rel_grad;
  Var bank_key = rel ? rel->key : Var{};
  Var bank_value = rel ? rel->value : Var{};
  return tape.record(
      std::move(z), ng,
      [q, k, v, bank_key, bank_value, has_rel = rel != nullptr, num_heads, n, width, dz, inv,
       alpha = std::move(alpha), keep = std::move(keep), row_of = std::move(row_of)](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& qv = q.value();
        const Tensor& kv = k.value();
        const Tensor& vv = v.value();
        const double* ak_base = has_rel ? bank_key.value().data() : nullptr;
        const double* av_base = has_rel ? bank_value.value().data() : nullptr;
        double* gq = tp.needs_grad(q) ? tp.grad(q.id()).data() : nullptr;
        double* gk = tp.needs_grad(k) ? tp.grad(k.id()).data() : nullptr;
        double* gv = tp.needs_grad(v) ? tp.grad(v.id()).data() : nullptr;
        double* gak = has_rel && tp.needs_grad(bank_key) ? tp.grad(bank_key.id()).data() : nullptr;
        double* gav = has_rel && tp.needs_grad(bank_value) ? tp.grad(bank_value.id()).data() : nullptr;

        std::vector<double> dalpha(n);
        for (std::size_t h = 0; h < num_heads; ++h) {
          const std::size_t c0 = h * dz;
          const double* a = alpha.data() + h * n * n;
          for (std::size_t i = 0; i < n; ++i) {
            const double* gi = g.data() + i * width + c0;
            // d(alpha_ij) through z_i, and the value-side contributions.
            for (std::size_t j = 0; j < n; ++j) {
              const double m = keep.empty() ? 1.0 : keep[h * n * n + i * n + j];
              const double* vj = vv.data() + j * width + c0;
              const double* av = has_rel ? av_base + row_of[i * n + j] * dz : nullptr;
              double dot = 0.0;
              for (std::size_t d = 0; d < dz; ++d) dot += gi[d] * (vj[d] + (av ? av[d] : 0.0));
              dalpha[j] = dot * m;
              const double w = a[i * n + j] * m;
              if (gv)
                for (std::size_t d = 0; d < dz; ++d) gv[j * width + c0 + d] += w * gi[d];
              if (gav) {
                double* dst = gav + row_of[i * n + j] * dz;
                for (std::size_t d = 0; d < dz; ++d) dst[d] += w * gi[d];
              }
            }
            double weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) weighted += a[i * n + j] * dalpha[j];
            const double* qi = qv.data() + i * width + c0;
            for (std::size_t j = 0; j < n; ++j) {
              const double ds = a[i * n + j] * (dalpha[j] - weighted) * inv;
              if (ds == 0.0) continue;
              const double* kj = kv.data() + j * width + c0;
              const double* ak = has_rel ? ak_base + row_of[i * n + j] * dz : nullptr;
              if (gq)
                for (std::size_t d = 0; d < dz; ++d) gq[i * width + c0 + d] += ds * (kj[d] + (ak ? ak[d] : 0.0));
              if (gk)
                for (std::size_t d = 0; d < dz; ++d) gk[j * width + c0 + d] += ds * qi[d];
              if (gak) {
                double* dst = gak + row_of[i * n + j] * dz;
                for (std::size_t d = 0; d < dz; ++d) dst[d] += ds * qi[d];
              }
            }
          }
        }
      });
}

Var multi_head_attention(Var x, const BlockVars& w, const AttentionConfig& cfg, const RelativeBanks* rel,
                         std::span<const bool> mask, std::mt19937_64* rng) {
  cfg.validate();
  if (x.value().rank() != 2 || x.value().cols() != cfg.d_model)
    throw std::invalid_argument("multi_head_attention: input " + shape_string(x.value().shape()) +
                                " does not have width " + std::to_string(cfg.d_model));
  const Var q = ad::matmul(x, w.query);
  const Var k = ad::matmul(x, w.key);
  const Var v = ad::matmul(x, w.value);
  const Var heads = relative_attention(q, k, v, cfg.num_heads, rel, mask, cfg.prob_dropout, rng);
  return ad::add_bias(ad::matmul(heads, w.output), w.output_bias);
}

Tensor multi_head_attention(const Tensor& x, const HeadWeights& weights, const AttentionConfig& cfg,
                            const posenc::RelPositionTable* table, std::span<const bool> mask) {
  Tape tape;
  const BlockVars vars{tape.constant_ref(weights.query), tape.constant_ref(weights.key),
                       tape.constant_ref(weights.value), tape.constant_ref(weights.output),
                       tape.constant_ref(weights.output_bias)};
  RelativeBanks banks;
  posenc::RelPositionTable grown;
  if (table) {
    const posenc::RelPositionTable* use = table;
    if (table->fixed() && !table->covers(static_cast<long>(x.rows()) - 1)) {
      grown = table->extended(x.rows());
      use = &grown;
    }
    banks = bind_table(tape, *use);
  }
  const Var out = multi_head_attention(tape.constant_ref(x), vars, cfg, table ? &banks : nullptr, mask);
  return out.value();
}

}  // namespace deskbert::attention
