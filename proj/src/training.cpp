#include "vmp/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <sstream>

#include "vmp/error.hpp"
#include "vmp/nn/layers.hpp"
#include "vmp/rng.hpp"

namespace vmp {

using nn::Tape;
using nn::Tensor;
using nn::Var;

TrainConfig multimodal_preset() {
  TrainConfig cfg;
  cfg.regime = Regime::kMultimodal;
  cfg.epochs = 20;
  cfg.milestones = {6, 12};
  cfg.gamma = 0.3;
  return cfg;
}

TrainConfig pretrain_encoder_preset() {
  TrainConfig cfg;
  cfg.regime = Regime::kPretrainEncoder;
  cfg.epochs = 19;
  cfg.milestones = {5, 10, 15};
  cfg.gamma = 0.3;
  return cfg;
}

TrainConfig sngp_head_preset() {
  TrainConfig cfg;
  cfg.regime = Regime::kSngpHead;
  cfg.epochs = 5;
  cfg.milestones = {};
  return cfg;
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ValueError("train config: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ValueError("train config: batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ValueError("train config: lr must be positive");
  if (!(cfg.data_fraction > 0.0 && cfg.data_fraction <= 1.0))
    throw ValueError("train config: data_fraction must be in (0, 1]");
  nn::validate_schedule(nn::LrSchedule{cfg.lr, cfg.milestones, cfg.gamma});
  validate_encoder_config(cfg.encoder);
  validate_decoder_config(cfg.decoder);
  validate_sngp_config(cfg.sngp);
  if (cfg.regime == Regime::kSngpHead && cfg.pretrained_path.empty())
    throw ValueError("train config: SNGP regime requires a pretrained encoder checkpoint");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(seed, 0xE0000000ULL + static_cast<std::uint64_t>(epoch)));
  shuffle_deterministic(order, rng);
  return order;
}

namespace {

struct TrainExample {
  VectorizedScene vs;
  std::vector<Vec2> gt_agent;  // agent-frame ground truth
  Tensor gt_flat;              // [1 x 2T]
};

std::vector<TrainExample> prepare_examples(const std::vector<Scene>& scenes, double fraction) {
  if (scenes.empty()) throw ValueError("train: no scenes");
  std::size_t keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(scenes.size())));
  keep = std::clamp<std::size_t>(keep, 1, scenes.size());
  std::vector<TrainExample> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    const Scene& scene = scenes[i];
    if (!scene.future.has_value())
      throw ValueError("train: scene '" + scene.scene_id + "' has no ground truth");
    TrainExample ex;
    ex.vs = vectorize_scene(scene);
    ex.gt_agent.reserve(scene.future->size());
    std::vector<double> flat;
    flat.reserve(scene.future->size() * 2);
    for (const auto& p : *scene.future) {
      const Vec2 q = ex.vs.frame.to_agent(p);
      ex.gt_agent.push_back(q);
      flat.push_back(q.x);
      flat.push_back(q.y);
    }
    ex.gt_flat = Tensor::row(std::move(flat));
    out.push_back(std::move(ex));
  }
  return out;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// Shared loop for the two mixture-loss regimes; `forward` builds the tape
// for one example and returns the scalar loss var.
template <typename ForwardFn>
TrainReport run_gradient_regime(const std::vector<TrainExample>& examples, const TrainConfig& cfg,
                                nn::ParamStore& store, ForwardFn&& forward) {
  const nn::LrSchedule schedule{cfg.lr, cfg.milestones, cfg.gamma};
  TrainReport report;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double t0 = now_seconds();
    const double lr = nn::lr_at(schedule, epoch);
    const auto order = epoch_order(examples.size(), cfg.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      store.zero_grads();
      for (std::size_t b = begin; b < end; ++b) {
        const TrainExample& ex = examples[order[b]];
        Tape tape;
        Var loss = forward(tape, ex);
        const double value = tape.value(loss).values[0];
        if (!std::isfinite(value))
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(begin / cfg.batch_size) + ", scene '" + ex.vs.scene_id + "'");
        loss_sum += value;
        tape.backward(loss);
      }
      store.scale_grads(1.0 / static_cast<double>(end - begin));
      store.adam_step(lr);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(examples.size());
    stats.lr = lr;
    stats.seconds = now_seconds() - t0;
    if (!std::isfinite(stats.mean_loss))
      throw NumericError("train: non-finite epoch loss at epoch " + std::to_string(epoch));
    report.epochs.push_back(stats);
  }
  return report;
}

TrainReport train_multimodal(const std::vector<TrainExample>& examples, const TrainConfig& cfg,
                             const std::string& out_path) {
  nn::ParamStore store;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x1217ULL));
  init_multimodal_params(store, cfg.encoder, cfg.decoder, rng);
  TrainReport report = run_gradient_regime(examples, cfg, store, [&](Tape& tape, const TrainExample& ex) {
    const DecodeVars vars = forward_multimodal(tape, store, cfg.encoder, cfg.decoder, ex.vs);
    return mixture_nll_loss(tape, vars, ex.gt_agent);
  });
  nn::NamedTensors entries = store_entries(store);
  entries.emplace_back("meta.encoder", encode_encoder_meta(cfg.encoder));
  entries.emplace_back("meta.decoder", encode_decoder_meta(cfg.decoder));
  nn::save_checkpoint(entries, out_path);
  report.checkpoint_path = out_path;
  return report;
}

TrainReport train_pretrain(const std::vector<TrainExample>& examples, const TrainConfig& cfg,
                           const std::string& out_path) {
  nn::ParamStore store;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x1217ULL));
  init_pretrain_params(store, cfg.encoder, cfg.decoder.num_modes, cfg.decoder.horizon,
                       cfg.pretrain_head_hidden, rng);
  TrainReport report = run_gradient_regime(examples, cfg, store, [&](Tape& tape, const TrainExample& ex) {
    const DecodeVars vars =
        forward_pretrain(tape, store, cfg.encoder, cfg.decoder.num_modes, cfg.decoder.horizon, ex.vs);
    return mixture_nll_loss(tape, vars, ex.gt_agent);
  });
  nn::NamedTensors entries = store_entries(store);
  entries.emplace_back("meta.encoder", encode_encoder_meta(cfg.encoder));
  nn::save_checkpoint(entries, out_path);
  report.checkpoint_path = out_path;
  return report;
}

// Target-row embedding of one scene under a frozen encoder.
Tensor frozen_embedding(nn::ParamStore& encoder_store, const EncoderConfig& enc, const VectorizedScene& vs) {
  Tape tape;
  const SceneEmbeddingVars emb = encode(tape, encoder_store, enc, vs);
  const Tensor& all = tape.value(emb.polylines);
  Tensor row = Tensor::zeros({1, all.cols()});
  for (std::size_t c = 0; c < all.cols(); ++c) row.at(0, c) = all.at(emb.target_row, c);
  return row;
}

TrainReport train_sngp(const std::vector<TrainExample>& examples, const TrainConfig& cfg,
                       const std::string& out_path) {
  const nn::NamedTensors pretrained = nn::load_checkpoint(cfg.pretrained_path);
  const EncoderConfig enc = decode_encoder_meta(nn::checkpoint_entry(pretrained, "meta.encoder"));
  nn::ParamStore encoder_store;
  load_entries(encoder_store, pretrained, "encoder.");
  if (encoder_store.size() == 0)
    throw SchemaError("train: pretrained checkpoint has no encoder entries: " + cfg.pretrained_path);

  // The encoder is frozen, so per-scene embeddings are computed once.
  std::vector<Tensor> embeddings;
  embeddings.reserve(examples.size());
  for (const auto& ex : examples) embeddings.push_back(frozen_embedding(encoder_store, enc, ex.vs));
  const std::size_t d = embeddings.front().cols();

  SngpConfig sngp_cfg = cfg.sngp;
  sngp_cfg.output_dim = cfg.decoder.horizon * 2;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5470ULL));
  SngpState state = init_sngp_state(sngp_cfg, static_cast<int>(d), rng);
  SpectralPower power = init_spectral_power(d, d, rng);

  nn::ParamStore store;
  nn::glorot_init(store.create("sngp.sn.w", d, d), rng);
  store.create("sngp.sn.b", 1, d);
  store.create("sngp.beta", static_cast<std::size_t>(sngp_cfg.rff_dim),
               static_cast<std::size_t>(sngp_cfg.output_dim));

  const nn::LrSchedule schedule{cfg.lr, cfg.milestones, cfg.gamma};
  TrainReport report;

  auto batch_phi = [&](const std::vector<std::size_t>& ids, double sn_scale) {
    Tensor phis = Tensor::zeros({ids.size(), static_cast<std::size_t>(sngp_cfg.rff_dim)});
    for (std::size_t r = 0; r < ids.size(); ++r) {
      Tape tape;
      Var dvar = tape.constant(embeddings[ids[r]]);
      Var dprime = tape.add(tape.matmul(dvar, tape.scale(tape.param(store, "sngp.sn.w"), sn_scale)),
                            tape.param(store, "sngp.sn.b"));
      Var phi = rff(tape, state, dprime);
      const Tensor& value = tape.value(phi);
      for (std::size_t c = 0; c < value.cols(); ++c) phis.at(r, c) = value.at(0, c);
    }
    return phis;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double t0 = now_seconds();
    const double lr = nn::lr_at(schedule, epoch);
    const auto order = epoch_order(examples.size(), cfg.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      // One power-iteration refresh per optimization step; the resulting
      // scale is a constant in the backward pass.
      const double sn_scale =
          spectral_scale(store.value("sngp.sn.w"), power, sngp_cfg.sn_iters, sngp_cfg.sn_bound);
      store.zero_grads();
      Tensor phis = Tensor::zeros({end - begin, static_cast<std::size_t>(sngp_cfg.rff_dim)});
      for (std::size_t b = begin; b < end; ++b) {
        const TrainExample& ex = examples[order[b]];
        Tape tape;
        Var dvar = tape.constant(embeddings[order[b]]);
        Var dprime = tape.add(tape.matmul(dvar, tape.scale(tape.param(store, "sngp.sn.w"), sn_scale)),
                              tape.param(store, "sngp.sn.b"));
        Var phi = rff(tape, state, dprime);
        Var pred = tape.matmul(phi, tape.param(store, "sngp.beta"));
        Var diff = tape.sub(pred, tape.constant(ex.gt_flat));
        Var loss = tape.scale(tape.sum_all(tape.mul(diff, diff)), 0.5);
        const double value = tape.value(loss).values[0];
        if (!std::isfinite(value))
          throw NumericError("train: non-finite SNGP loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(begin / cfg.batch_size));
        loss_sum += value;
        tape.backward(loss);
        const Tensor& phi_value = tape.value(phi);
        for (std::size_t c = 0; c < phi_value.cols(); ++c) phis.at(b - begin, c) = phi_value.at(0, c);
      }
      store.scale_grads(1.0 / static_cast<double>(end - begin));
      // MAP ridge on beta with the same coefficient as the precision prior.
      {
        const Tensor& beta = store.value("sngp.beta");
        Tensor ridge_grad = beta;
        for (double& v : ridge_grad.values) v *= sngp_cfg.ridge;
        store.accumulate_grad("sngp.beta", ridge_grad);
      }
      store.adam_step(lr);
      precision_update(state, phis);
    }
    reset_covariance(state);
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(examples.size());
    stats.lr = lr;
    stats.seconds = now_seconds() - t0;
    report.epochs.push_back(stats);
  }

  // The per-epoch reset leaves a bare prior at save time, so the stored
  // precision is rebuilt with one full pass under the final weights.
  const double final_scale =
      spectral_scale(store.value("sngp.sn.w"), power, sngp_cfg.sn_iters, sngp_cfg.sn_bound);
  std::vector<std::size_t> all_ids(examples.size());
  for (std::size_t i = 0; i < all_ids.size(); ++i) all_ids[i] = i;
  for (std::size_t begin = 0; begin < all_ids.size(); begin += cfg.batch_size) {
    const std::size_t end = std::min(all_ids.size(), begin + static_cast<std::size_t>(cfg.batch_size));
    precision_update(state, batch_phi({all_ids.begin() + begin, all_ids.begin() + end}, final_scale));
  }

  // Stored spectral weight is pre-normalized so inference applies it as-is.
  Tensor w_bar = store.value("sngp.sn.w");
  for (double& v : w_bar.values) v *= final_scale;

  nn::NamedTensors entries = store_entries(encoder_store);
  entries.emplace_back("sngp.sn.w", std::move(w_bar));
  entries.emplace_back("sngp.sn.b", store.value("sngp.sn.b"));
  entries.emplace_back("sngp.beta", store.value("sngp.beta"));
  entries.emplace_back("sngp.w_l", state.w_l);
  entries.emplace_back("sngp.b_l", state.b_l);
  entries.emplace_back("sngp.precision", state.precision);
  entries.emplace_back("meta.encoder", encode_encoder_meta(enc));
  entries.emplace_back("meta.sngp", encode_sngp_meta(sngp_cfg));
  nn::save_checkpoint(entries, out_path);
  report.checkpoint_path = out_path;
  return report;
}

}  // namespace

TrainReport train(const std::vector<Scene>& scenes, const TrainConfig& cfg, const std::string& out_path) {
  validate_train_config(cfg);
  const std::vector<TrainExample> examples = prepare_examples(scenes, cfg.data_fraction);
  switch (cfg.regime) {
    case Regime::kMultimodal:
      return train_multimodal(examples, cfg, out_path);
    case Regime::kPretrainEncoder:
      return train_pretrain(examples, cfg, out_path);
    case Regime::kSngpHead:
      return train_sngp(examples, cfg, out_path);
  }
  throw ValueError("train: unknown regime");
}

std::string train_log_jsonl(const TrainReport& report) {
  auto fmt = [](double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
  };
  std::ostringstream out;
  for (const auto& e : report.epochs) {
    out << "{\"epoch\":" << e.epoch << ",\"mean_loss\":" << fmt(e.mean_loss) << ",\"lr\":" << fmt(e.lr)
        << ",\"seconds\":" << fmt(e.seconds) << "}\n";
  }
  return out.str();
}

std::vector<PredictionRow> predict_scenes(const std::vector<Scene>& scenes, const std::string& model_ckpt,
                                          const std::optional<std::string>& sngp_ckpt) {
  const nn::NamedTensors model_entries = nn::load_checkpoint(model_ckpt);
  const EncoderConfig enc = decode_encoder_meta(nn::checkpoint_entry(model_entries, "meta.encoder"));
  const DecoderConfig dec = decode_decoder_meta(nn::checkpoint_entry(model_entries, "meta.decoder"));
  nn::ParamStore store;
  load_entries(store, model_entries);

  struct SngpRuntime {
    EncoderConfig enc;
    nn::ParamStore encoder_store;
    SngpState state;
    Tensor sn_w;
    Tensor sn_b;
  };
  std::optional<SngpRuntime> sngp_rt;
  if (sngp_ckpt.has_value()) {
    const nn::NamedTensors entries = nn::load_checkpoint(*sngp_ckpt);
    SngpRuntime rt;
    rt.enc = decode_encoder_meta(nn::checkpoint_entry(entries, "meta.encoder"));
    load_entries(rt.encoder_store, entries, "encoder.");
    const SngpConfig scfg = decode_sngp_meta(nn::checkpoint_entry(entries, "meta.sngp"));
    rt.state.cfg = scfg;
    rt.state.w_l = nn::checkpoint_entry(entries, "sngp.w_l");
    rt.state.b_l = nn::checkpoint_entry(entries, "sngp.b_l");
    rt.state.precision = nn::checkpoint_entry(entries, "sngp.precision");
    rt.state.neg_wl_t = Tensor::zeros({rt.state.w_l.cols(), rt.state.w_l.rows()});
    for (std::size_t r = 0; r < rt.state.w_l.rows(); ++r)
      for (std::size_t c = 0; c < rt.state.w_l.cols(); ++c) rt.state.neg_wl_t.at(c, r) = -rt.state.w_l.at(r, c);
    rt.sn_w = nn::checkpoint_entry(entries, "sngp.sn.w");
    rt.sn_b = nn::checkpoint_entry(entries, "sngp.sn.b");
    sngp_rt = std::move(rt);
  }

  std::vector<PredictionRow> rows;
  rows.reserve(scenes.size());
  for (const auto& scene : scenes) {
    const VectorizedScene vs = vectorize_scene(scene);
    Tape tape;
    const DecodeVars vars = forward_multimodal(tape, store, enc, dec, vs);
    PredictionRow row;
    row.scene_id = scene.scene_id;
    row.prediction = predict_world(extract_prediction(tape, vars, dec.horizon), vs.frame);
    if (sngp_rt.has_value()) {
      const Tensor d = frozen_embedding(sngp_rt->encoder_store, sngp_rt->enc, vs);
      Tensor dprime = Tensor::zeros({1, sngp_rt->sn_w.cols()});
      for (std::size_t c = 0; c < sngp_rt->sn_w.cols(); ++c) {
        double acc = sngp_rt->sn_b.at(0, c);
        for (std::size_t r = 0; r < sngp_rt->sn_w.rows(); ++r) acc += d.at(0, r) * sngp_rt->sn_w.at(r, c);
        dprime.at(0, c) = acc;
      }
      row.uncertainty = uncertainty(sngp_rt->state, rff(sngp_rt->state, dprime));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace vmp
