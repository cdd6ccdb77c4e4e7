#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include "deskbert/numerics/autodiff.hpp"
#include "deskbert/numerics/tensor.hpp"
#include "deskbert/posenc/posenc.hpp"

namespace deskbert::attention {

// Additive score for masked key positions.
inline constexpr double kMaskedScore = -1e9;

struct AttentionConfig {
  std::size_t num_heads = 2;
  std::size_t d_model = 64;
  posenc::Scheme scheme = posenc::Scheme::Frpe;
  double prob_dropout = 0.0;

  std::size_t head_dim() const { return d_model / num_heads; }
  void validate() const;
};

// W^Q, W^K, W^V are [d_model x d_model]; head h owns columns
// [h*d_z, (h+1)*d_z), i.e. the per-head d_x x d_z matrices side by side.
struct HeadWeights {
  Tensor query;
  Tensor key;
  Tensor value;
  Tensor output;       // [d_model x d_model]
  Tensor output_bias;  // [d_model], zero at init
};

HeadWeights init_head_weights(std::size_t d_model, std::uint64_t seed);

// Single head. e_ij = q_i . (k_j + a^K_{j-i}) / sqrt(d_z), with a^K = 0
// when `table` is null. Invalid key columns (mask[j] == false) get
// kMaskedScore added. An empty mask means all positions are valid.
Tensor attention_scores(const Tensor& q, const Tensor& k, const posenc::RelPositionTable* table,
                        std::span<const bool> mask = {});

// Single head. z_i = sum_j alpha_ij (v_j + a^V_{j-i}).
Tensor attention_output(const Tensor& alpha, const Tensor& v, const posenc::RelPositionTable* table);

// Relative banks bound on a tape: row = clamp(j - i, -reach, reach) + reach.
// FRPE binds the same constant bank to both roles.
struct RelativeBanks {
  Var key;
  Var value;
  long reach = 0;
};

// Binds a table's banks to the tape as constants (FRPE) or as the given
// learned leaves (PRPE, when `key`/`value` are valid).
RelativeBanks bind_table(Tape& tape, const posenc::RelPositionTable& table);

// Fused multi-head score/softmax/combine over already-projected q, k, v
// ([n x d_model] each). All heads share `rel`.
Var relative_attention(Var q, Var k, Var v, std::size_t num_heads, const RelativeBanks* rel,
                       std::span<const bool> mask, double prob_dropout = 0.0, std::mt19937_64* rng = nullptr);

struct BlockVars {
  Var query;
  Var key;
  Var value;
  Var output;
  Var output_bias;
};

// Projects, attends per head, concatenates heads, applies W^O and bias.
Var multi_head_attention(Var x, const BlockVars& weights, const AttentionConfig& cfg, const RelativeBanks* rel,
                         std::span<const bool> mask, std::mt19937_64* rng = nullptr);

// Value-level convenience over a private tape.
Tensor multi_head_attention(const Tensor& x, const HeadWeights& weights, const AttentionConfig& cfg,
                            const posenc::RelPositionTable* table, std::span<const bool> mask = {});

}  // namespace deskbert::attention
