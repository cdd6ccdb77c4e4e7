#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "deskbert/attention/attention.hpp"
#include "deskbert/data/example.hpp"
#include "deskbert/numerics/autodiff.hpp"
#include "deskbert/numerics/parameters.hpp"
#include "deskbert/posenc/posenc.hpp"

namespace deskbert::encoder {

struct EncoderConfig {
  std::size_t vocab_size = 128;
  std::size_t hidden_size = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t ffn_size = 256;
  std::size_t max_seq_len = 128;
  std::size_t type_vocab_size = 2;
  posenc::EncodingScheme encoding;
  // Learned absolute embeddings at the input even for relative schemes.
  bool add_absolute_input_embeddings = false;
  double hidden_dropout = 0.0;
  double attention_dropout = 0.0;
  double layer_norm_eps = 1e-12;
  double init_std = 0.02;

  bool uses_absolute_positions() const {
    return encoding.kind == posenc::Scheme::Pape || add_absolute_input_embeddings;
  }
  attention::AttentionConfig attention() const;
  void validate() const;
};

// Parameter indices of one encoder layer inside the store.
struct LayerSlots {
  std::size_t query, key, value, output, output_bias;
  std::size_t attn_norm_gamma, attn_norm_beta;
  std::size_t ffn_in, ffn_in_bias, ffn_out, ffn_out_bias;
  std::size_t ffn_norm_gamma, ffn_norm_beta;
  // PRPE banks; unused otherwise.
  std::size_t rel_key = 0, rel_value = 0;
};

// Embeddings, encoder stack and both pretraining heads. The MLM decoder is
// the transposed token embedding, so no separate V x d_model matrix exists.
class EncoderModel {
 public:
  EncoderModel(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  // Fixed FRPE bank; empty for other schemes and never in the store.
  const posenc::RelPositionTable& frpe_table() const { return frpe_; }

  struct Slots {
    std::size_t token, segment, position = 0, emb_norm_gamma, emb_norm_beta;
    std::vector<LayerSlots> layers;
    std::size_t mlm_dense, mlm_dense_bias, mlm_norm_gamma, mlm_norm_beta, mlm_output_bias;
    std::size_t pooler, pooler_bias, nsp, nsp_bias;
  };
  const Slots& slots() const { return slots_; }

 private:
  EncoderConfig config_;
  ParameterStore params_;
  posenc::RelPositionTable frpe_;
  Slots slots_;
};

// Everything a forward pass needs besides the example. `params` defaults to
// the model's own store; mixed precision passes a rounded working copy with
// the same layout.
struct ForwardContext {
  Tape& tape;
  const EncoderModel& model;
  const ParameterStore& params;
  std::mt19937_64* dropout_rng = nullptr;
  // Training mode enables dropout.
  bool training = false;
};

struct ForwardOutput {
  Var sequence;    // [n x d_model]
  Var pooled;      // [1 x d_model]
  Var mlm_logits;  // [positions x V]; invalid when there are no positions
  Var nsp_logits;  // [1 x 2]
};

struct LossBundle {
  Var total;
  double total_value = 0.0;
  double mlm_loss = 0.0;
  double nsp_loss = 0.0;
  std::size_t mlm_count = 0;
  std::size_t mlm_correct = 0;
  bool has_nsp = false;
  bool nsp_correct = false;

  double mlm_accuracy() const { return mlm_count ? static_cast<double>(mlm_correct) / mlm_count : 0.0; }
};

Var embed_inputs(const ForwardContext& ctx, std::span<const std::size_t> token_ids,
                 std::span<const std::size_t> segment_ids);

// Binds the scheme's relative banks for a given layer and sequence length.
// Returns false for schemes without relative terms.
bool bind_relative(const ForwardContext& ctx, std::size_t layer, std::size_t length, attention::RelativeBanks& out);

// y = LN(x + MHA(x)); out = LN(y + FFN(y)), FFN = dense -> gelu -> dense.
Var encoder_layer_forward(const ForwardContext& ctx, std::size_t layer, Var x, const attention::RelativeBanks* rel,
                          std::span<const bool> mask = {});

ForwardOutput pretrain_forward(const ForwardContext& ctx, const data::PretrainExample& example,
                               std::span<const bool> mask = {});

// Mean MLM cross-entropy plus NSP cross-entropy (unweighted sum). An example
// without positions contributes 0 for MLM; kNoNspLabel drops the NSP term.
LossBundle pretrain_loss(const ForwardContext& ctx, const ForwardOutput& out, const data::PretrainExample& example);

// Forward-only evaluation with the model's own parameters.
LossBundle evaluate_example(const EncoderModel& model, const data::PretrainExample& example);

// Loss and parameter gradients for a batch, averaged over examples. Runs
// with half emulation and the loss scaled by `loss_scale` when requested;
// returned gradients are then still scaled.
struct BatchResult {
  double loss = 0.0;
  double mlm_loss = 0.0;
  double nsp_loss = 0.0;
  std::size_t mlm_count = 0;
  std::size_t mlm_correct = 0;
  Gradients grads;
};

BatchResult batch_gradients(const EncoderModel& model, const ParameterStore& params,
                            std::span<const data::PretrainExample> batch, std::uint64_t dropout_seed,
                            bool emulate_half = false, double loss_scale = 1.0);

}  // namespace deskbert::encoder
