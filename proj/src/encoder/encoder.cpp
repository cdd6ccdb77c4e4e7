#include "deskbert/encoder/encoder.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "deskbert/optim/half.hpp"
#include "deskbert/rng.hpp"

namespace deskbert::encoder {

attention::AttentionConfig EncoderConfig::attention() const {
  return {num_heads, hidden_size, encoding.kind, attention_dropout};
}

void EncoderConfig::validate() const {
  if (vocab_size < 6) throw std::invalid_argument("vocab_size must cover the special tokens");
  if (hidden_size == 0 || num_layers == 0 || ffn_size == 0 || max_seq_len == 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (type_vocab_size != 2) throw std::invalid_argument("type_vocab_size must be 2");
  attention().validate();
  encoding.validate(max_seq_len);
  if (hidden_dropout < 0.0 || hidden_dropout >= 1.0) throw std::invalid_argument("hidden dropout must be in [0, 1)");
  if (layer_norm_eps < 0.0) throw std::invalid_argument("layer_norm_eps must be non-negative");
}

EncoderModel::EncoderModel(EncoderConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.hidden_size;
  const double sd = config_.init_std;
  std::uint64_t counter = 0;
  auto weight = [&](const std::string& name, Shape shape) {
    return params_.add(name, posenc::normal_tensor(std::move(shape), sd, mix_seed(seed, counter++)));
  };
  auto zeros = [&](const std::string& name, std::size_t n) { return params_.add(name, Tensor({n}), true); };
  auto ones = [&](const std::string& name, std::size_t n) { return params_.add(name, Tensor({n}, 1.0), true); };

  slots_.token = weight("embeddings.token", {config_.vocab_size, d});
  slots_.segment = weight("embeddings.segment", {config_.type_vocab_size, d});
  if (config_.uses_absolute_positions()) {
    const std::size_t rows = config_.encoding.kind == posenc::Scheme::Pape
                                 ? config_.encoding.max_position
                                 : std::max(config_.encoding.max_position, config_.max_seq_len);
    slots_.position = weight("embeddings.position", {rows, d});
  }
  slots_.emb_norm_gamma = ones("embeddings.norm.gamma", d);
  slots_.emb_norm_beta = zeros("embeddings.norm.beta", d);

  const std::size_t dz = config_.attention().head_dim();
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerSlots s{};
    s.query = weight(p + "attention.query", {d, d});
    s.key = weight(p + "attention.key", {d, d});
    s.value = weight(p + "attention.value", {d, d});
    s.output = weight(p + "attention.output", {d, d});
    s.output_bias = zeros(p + "attention.output_bias", d);
    if (config_.encoding.kind == posenc::Scheme::Prpe) {
      auto table = posenc::build_rel_table(config_.max_seq_len, dz, config_.encoding, mix_seed(seed, counter++));
      s.rel_key = params_.add(p + "attention.rel_key", table.bank(posenc::Role::Key));
      s.rel_value = params_.add(p + "attention.rel_value", table.bank(posenc::Role::Value));
    }
    s.attn_norm_gamma = ones(p + "attention.norm.gamma", d);
    s.attn_norm_beta = zeros(p + "attention.norm.beta", d);
    s.ffn_in = weight(p + "ffn.in", {d, config_.ffn_size});
    s.ffn_in_bias = zeros(p + "ffn.in_bias", config_.ffn_size);
    s.ffn_out = weight(p + "ffn.out", {config_.ffn_size, d});
    s.ffn_out_bias = zeros(p + "ffn.out_bias", d);
    s.ffn_norm_gamma = ones(p + "ffn.norm.gamma", d);
    s.ffn_norm_beta = zeros(p + "ffn.norm.beta", d);
    slots_.layers.push_back(s);
  }

  slots_.mlm_dense = weight("mlm.transform", {d, d});
  slots_.mlm_dense_bias = zeros("mlm.transform_bias", d);
  slots_.mlm_norm_gamma = ones("mlm.norm.gamma", d);
  slots_.mlm_norm_beta = zeros("mlm.norm.beta", d);
  slots_.mlm_output_bias = zeros("mlm.output_bias", config_.vocab_size);
  slots_.pooler = weight("pooler.dense", {d, d});
  slots_.pooler_bias = zeros("pooler.bias", d);
  slots_.nsp = weight("nsp.classifier", {d, 2});
  slots_.nsp_bias = zeros("nsp.bias", 2);

  if (config_.encoding.kind == posenc::Scheme::Frpe)
    frpe_ = posenc::build_rel_table(config_.max_seq_len, dz, config_.encoding, seed);
}

namespace {

Var p(const ForwardContext& ctx, std::size_t slot) { return ctx.tape.param(ctx.params, slot); }

Var maybe_dropout(const ForwardContext& ctx, Var x) {
  const double rate = ctx.model.config().hidden_dropout;
  if (!ctx.training || rate <= 0.0) return x;
  if (ctx.dropout_rng == nullptr) throw std::invalid_argument("dropout requires an rng");
  return ad::dropout(x, rate, *ctx.dropout_rng);
}

}  // namespace

Var embed_inputs(const ForwardContext& ctx, std::span<const std::size_t> token_ids,
                 std::span<const std::size_t> segment_ids) {
  const auto& cfg = ctx.model.config();
  const auto& slots = ctx.model.slots();
  if (token_ids.size() != segment_ids.size())
    throw std::invalid_argument("embed_inputs: " + std::to_string(token_ids.size()) + " tokens vs " +
                                std::to_string(segment_ids.size()) + " segment ids");
  if (token_ids.empty()) throw std::invalid_argument("embed_inputs: empty sequence");
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] >= cfg.vocab_size)
      throw std::out_of_range("token id " + std::to_string(token_ids[i]) + " at index " + std::to_string(i) +
                              " exceeds vocab size " + std::to_string(cfg.vocab_size));
    if (segment_ids[i] >= cfg.type_vocab_size)
      throw std::out_of_range("segment id " + std::to_string(segment_ids[i]) + " at index " + std::to_string(i) +
                              " is not 0 or 1");
  }
  Var x = ad::add(ad::gather_rows(p(ctx, slots.token), token_ids), ad::gather_rows(p(ctx, slots.segment), segment_ids));
  if (cfg.uses_absolute_positions()) {
    const Var table = p(ctx, slots.position);
    const std::size_t rows = table.value().rows();
    if (token_ids.size() > rows)
      throw std::out_of_range("sequence length " + std::to_string(token_ids.size()) +
                              " exceeds the absolute position table (max position " + std::to_string(rows) + ")");
    std::vector<std::size_t> positions(token_ids.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
    x = ad::add(x, ad::gather_rows(table, positions));
  }
  x = ad::layer_norm(x, p(ctx, slots.emb_norm_gamma), p(ctx, slots.emb_norm_beta), cfg.layer_norm_eps);
  return maybe_dropout(ctx, x);
}

bool bind_relative(const ForwardContext& ctx, std::size_t layer, std::size_t length, attention::RelativeBanks& out) {
  const auto& cfg = ctx.model.config();
  switch (cfg.encoding.kind) {
    case posenc::Scheme::Frpe: {
      const auto& table = ctx.model.frpe_table();
      if (table.covers(static_cast<long>(length) - 1)) {
        out = attention::bind_table(ctx.tape, table);
      } else {
        // Function-defined: grow on demand for longer sequences.
        auto grown = table.extended(length);
        out.reach = grown.reach();
        out.key = ctx.tape.constant(grown.bank(posenc::Role::Key));
        out.value = out.key;
      }
      return true;
    }
    case posenc::Scheme::Prpe: {
      const auto& s = ctx.model.slots().layers.at(layer);
      out.key = p(ctx, s.rel_key);
      out.value = p(ctx, s.rel_value);
      out.reach = cfg.encoding.prpe_clip;
      return true;
    }
    default:
      return false;
  }
}

Var encoder_layer_forward(const ForwardContext& ctx, std::size_t layer, Var x, const attention::RelativeBanks* rel,
                          std::span<const bool> mask) {
  const auto& cfg = ctx.model.config();
  const auto& s = ctx.model.slots().layers.at(layer);
  const attention::BlockVars w{p(ctx, s.query), p(ctx, s.key), p(ctx, s.value), p(ctx, s.output),
                               p(ctx, s.output_bias)};
  std::mt19937_64* rng = ctx.training ? ctx.dropout_rng : nullptr;
  auto attn_cfg = cfg.attention();
  if (!ctx.training) attn_cfg.prob_dropout = 0.0;
  Var attn = attention::multi_head_attention(x, w, attn_cfg, rel, mask, rng);
  attn = maybe_dropout(ctx, attn);
  const Var y = ad::layer_norm(ad::add(x, attn), p(ctx, s.attn_norm_gamma), p(ctx, s.attn_norm_beta),
                               cfg.layer_norm_eps);
  Var f = ad::gelu(ad::add_bias(ad::matmul(y, p(ctx, s.ffn_in)), p(ctx, s.ffn_in_bias)));
  f = ad::add_bias(ad::matmul(f, p(ctx, s.ffn_out)), p(ctx, s.ffn_out_bias));
  f = maybe_dropout(ctx, f);
  return ad::layer_norm(ad::add(y, f), p(ctx, s.ffn_norm_gamma), p(ctx, s.ffn_norm_beta), cfg.layer_norm_eps);
}

ForwardOutput pretrain_forward(const ForwardContext& ctx, const data::PretrainExample& example,
                               std::span<const bool> mask) {
  const auto& cfg = ctx.model.config();
  const auto& slots = ctx.model.slots();
  const std::size_t n = example.tokens.size();
  for (std::size_t pos : example.predict_positions)
    if (pos >= n)
      throw std::out_of_range("prediction position " + std::to_string(pos) + " outside sequence of length " +
                              std::to_string(n));

  ForwardOutput out;
  Var x = embed_inputs(ctx, example.tokens, example.segments);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    attention::RelativeBanks banks;
    const bool has_rel = bind_relative(ctx, l, n, banks);
    x = encoder_layer_forward(ctx, l, x, has_rel ? &banks : nullptr, mask);
  }
  out.sequence = x;

  if (!example.predict_positions.empty()) {
    Var h = ad::select_rows(x, example.predict_positions);
    h = ad::gelu(ad::add_bias(ad::matmul(h, p(ctx, slots.mlm_dense)), p(ctx, slots.mlm_dense_bias)));
    h = ad::layer_norm(h, p(ctx, slots.mlm_norm_gamma), p(ctx, slots.mlm_norm_beta), cfg.layer_norm_eps);
    out.mlm_logits = ad::add_bias(ad::matmul_nt(h, p(ctx, slots.token)), p(ctx, slots.mlm_output_bias));
  }

  const std::size_t first = 0;
  Var cls = ad::select_rows(x, std::span<const std::size_t>(&first, 1));
  out.pooled = ad::tanh(ad::add_bias(ad::matmul(cls, p(ctx, slots.pooler)), p(ctx, slots.pooler_bias)));
  out.nsp_logits = ad::add_bias(ad::matmul(out.pooled, p(ctx, slots.nsp)), p(ctx, slots.nsp_bias));
  return out;
}

LossBundle pretrain_loss(const ForwardContext& ctx, const ForwardOutput& out, const data::PretrainExample& example) {
  if (example.predict_labels.size() != example.predict_positions.size())
    throw std::invalid_argument("pretrain_loss: " + std::to_string(example.predict_labels.size()) + " labels for " +
                                std::to_string(example.predict_positions.size()) + " positions");
  LossBundle bundle;
  Var total;
  if (!example.predict_positions.empty()) {
    const Var mlm = ad::cross_entropy(out.mlm_logits, example.predict_labels);
    bundle.mlm_loss = mlm.value()[0];
    bundle.mlm_count = example.predict_labels.size();
    const Tensor& logits = out.mlm_logits.value();
    for (std::size_t r = 0; r < bundle.mlm_count; ++r) {
      const auto row = logits.row(r);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == example.predict_labels[r]) ++bundle.mlm_correct;
    }
    total = mlm;
  }
  if (example.nsp_label != data::kNoNspLabel) {
    if (example.nsp_label != data::kIsNext && example.nsp_label != data::kNotNext)
      throw std::invalid_argument("pretrain_loss: nsp_label must be 0, 1 or -1");
    const std::size_t label = static_cast<std::size_t>(example.nsp_label);
    const Var nsp = ad::cross_entropy(out.nsp_logits, std::span<const std::size_t>(&label, 1));
    bundle.nsp_loss = nsp.value()[0];
    bundle.has_nsp = true;
    const Tensor& nl = out.nsp_logits.value();
    bundle.nsp_correct = (nl[1] > nl[0] ? 1u : 0u) == label;
    total = total.valid() ? ad::add(total, nsp) : nsp;
  }
  if (!total.valid()) total = ctx.tape.constant(Tensor({1}, 0.0));
  bundle.total = total;
  bundle.total_value = total.value()[0];
  return bundle;
}

LossBundle evaluate_example(const EncoderModel& model, const data::PretrainExample& example) {
  Tape tape;
  const ForwardContext ctx{tape, model, model.params()};
  const auto out = pretrain_forward(ctx, example);
  return pretrain_loss(ctx, out, example);
}

BatchResult batch_gradients(const EncoderModel& model, const ParameterStore& params,
                            std::span<const data::PretrainExample> batch, std::uint64_t dropout_seed,
                            bool emulate_half, double loss_scale) {
  if (batch.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  BatchResult result;
  result.grads = zero_gradients(params);
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Tape tape(emulate_half);
    std::mt19937_64 rng(mix_seed(dropout_seed, b));
    const ForwardContext ctx{tape, model, params, &rng, true};
    const auto out = pretrain_forward(ctx, batch[b]);
    const auto loss = pretrain_loss(ctx, out, batch[b]);
    tape.backward(loss.total, loss_scale * weight);
    tape.collect(params, result.grads);
    if (emulate_half)
      for (auto& g : result.grads) optim::round_half(g);
    result.loss += weight * loss.total_value;
    result.mlm_loss += weight * loss.mlm_loss;
    result.nsp_loss += weight * loss.nsp_loss;
    result.mlm_count += loss.mlm_count;
    result.mlm_correct += loss.mlm_correct;
  }
  return result;
}

}  // namespace deskbert::encoder
