#include "vmp/model.hpp"

#include "vmp/error.hpp"
#include "vmp/nn/layers.hpp"

namespace vmp {

using nn::Tape;
using nn::Tensor;
using nn::Var;

void init_multimodal_params(nn::ParamStore& store, const EncoderConfig& enc, const DecoderConfig& dec,
                            std::mt19937_64& rng) {
  init_encoder_params(store, enc, rng);
  init_decoder_params(store, dec, enc.embedding_dim(), rng);
}

DecodeVars forward_multimodal(Tape& tape, nn::ParamStore& store, const EncoderConfig& enc,
                              const DecoderConfig& dec, const VectorizedScene& vs) {
  const SceneEmbeddingVars emb = encode(tape, store, enc, vs);
  return decode(tape, store, dec, emb);
}

void init_pretrain_params(nn::ParamStore& store, const EncoderConfig& enc, int num_modes, int horizon,
                          int head_hidden, std::mt19937_64& rng) {
  if (num_modes < 1 || horizon < 1 || head_hidden < 1)
    throw ValueError("pretrain head: dimensions must be positive");
  init_encoder_params(store, enc, rng);
  const std::size_t d = static_cast<std::size_t>(enc.embedding_dim());
  const std::size_t hidden = static_cast<std::size_t>(head_hidden);
  nn::init_linear(store, "pretrain_head.l1", d, hidden, rng);
  nn::init_linear(store, "pretrain_head.traj", hidden,
                  static_cast<std::size_t>(num_modes) * static_cast<std::size_t>(horizon) * 2, rng);
  nn::init_linear(store, "pretrain_head.conf", hidden, static_cast<std::size_t>(num_modes), rng);
}

DecodeVars forward_pretrain(Tape& tape, nn::ParamStore& store, const EncoderConfig& enc, int num_modes,
                            int horizon, const VectorizedScene& vs) {
  const SceneEmbeddingVars emb = encode(tape, store, enc, vs);
  Var target = tape.gather_rows(emb.polylines, {emb.target_row});
  Var hidden = tape.relu(nn::linear(tape, store, target, "pretrain_head.l1"));
  Var offsets_row = nn::linear(tape, store, hidden, "pretrain_head.traj");
  Var offsets = tape.reshape(offsets_row, static_cast<std::size_t>(num_modes),
                             static_cast<std::size_t>(horizon) * 2);
  Var positions = tape.matmul(offsets, tape.constant(offset_prefix_sum_matrix(horizon)));
  Var logits = nn::linear(tape, store, hidden, "pretrain_head.conf");  // [1 x k]
  Var omega = tape.softmax_rows(logits);
  return DecodeVars{positions, logits, omega};
}

namespace {

double meta_at(const Tensor& t, std::size_t i, const char* what) {
  if (t.rank() != 2 || t.rows() != 1 || i >= t.cols()) throw SchemaError(std::string("meta: malformed ") + what);
  return t.at(0, i);
}

}  // namespace

Tensor encode_encoder_meta(const EncoderConfig& cfg) {
  return Tensor::row({static_cast<double>(cfg.mp_layers), static_cast<double>(cfg.mp_hidden),
                      static_cast<double>(cfg.attn_heads), static_cast<double>(cfg.attn_head_dim)});
}

EncoderConfig decode_encoder_meta(const Tensor& t) {
  EncoderConfig cfg;
  cfg.mp_layers = static_cast<int>(meta_at(t, 0, "encoder"));
  cfg.mp_hidden = static_cast<int>(meta_at(t, 1, "encoder"));
  cfg.attn_heads = static_cast<int>(meta_at(t, 2, "encoder"));
  cfg.attn_head_dim = static_cast<int>(meta_at(t, 3, "encoder"));
  validate_encoder_config(cfg);
  return cfg;
}

Tensor encode_decoder_meta(const DecoderConfig& cfg) {
  return Tensor::row({static_cast<double>(cfg.num_modes), static_cast<double>(cfg.blocks),
                      static_cast<double>(cfg.heads), static_cast<double>(cfg.hidden),
                      static_cast<double>(cfg.ffn_dim), static_cast<double>(cfg.horizon)});
}

DecoderConfig decode_decoder_meta(const Tensor& t) {
  DecoderConfig cfg;
  cfg.num_modes = static_cast<int>(meta_at(t, 0, "decoder"));
  cfg.blocks = static_cast<int>(meta_at(t, 1, "decoder"));
  cfg.heads = static_cast<int>(meta_at(t, 2, "decoder"));
  cfg.hidden = static_cast<int>(meta_at(t, 3, "decoder"));
  cfg.ffn_dim = static_cast<int>(meta_at(t, 4, "decoder"));
  cfg.horizon = static_cast<int>(meta_at(t, 5, "decoder"));
  validate_decoder_config(cfg);
  return cfg;
}

Tensor encode_sngp_meta(const SngpConfig& cfg) {
  return Tensor::row({static_cast<double>(cfg.rff_dim), cfg.discount, cfg.ridge, cfg.inv_lengthscale,
                      static_cast<double>(cfg.sn_iters), cfg.sn_bound, static_cast<double>(cfg.output_dim)});
}

SngpConfig decode_sngp_meta(const Tensor& t) {
  SngpConfig cfg;
  cfg.rff_dim = static_cast<int>(meta_at(t, 0, "sngp"));
  cfg.discount = meta_at(t, 1, "sngp");
  cfg.ridge = meta_at(t, 2, "sngp");
  cfg.inv_lengthscale = meta_at(t, 3, "sngp");
  cfg.sn_iters = static_cast<int>(meta_at(t, 4, "sngp"));
  cfg.sn_bound = meta_at(t, 5, "sngp");
  cfg.output_dim = static_cast<int>(meta_at(t, 6, "sngp"));
  validate_sngp_config(cfg);
  return cfg;
}

nn::NamedTensors store_entries(const nn::ParamStore& store) {
  nn::NamedTensors out;
  for (const auto& name : store.names()) out.emplace_back(name, store.value(name));
  return out;
}

void load_entries(nn::ParamStore& store, const nn::NamedTensors& entries, const std::string& prefix) {
  for (const auto& [name, tensor] : entries) {
    if (name.rfind("meta.", 0) == 0) continue;
    if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
    if (tensor.rank() != 2) throw SchemaError("checkpoint: parameter " + name + " is not rank-2");
    if (store.has(name)) {
      Tensor& dst = store.value(name);
      if (!dst.same_shape(tensor)) throw SchemaError("checkpoint: shape mismatch for " + name);
      dst = tensor;
    } else {
      store.create(name, tensor.rows(), tensor.cols()) = tensor;
    }
  }
}

}  // namespace vmp
