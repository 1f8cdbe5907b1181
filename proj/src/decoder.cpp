#include "vmp/decoder.hpp"

#include <cmath>
#include <limits>

#include "vmp/error.hpp"
#include "vmp/nn/layers.hpp"

namespace vmp {

using nn::Tape;
using nn::Tensor;
using nn::Var;

void validate_decoder_config(const DecoderConfig& cfg) {
  if (cfg.num_modes < 1 || cfg.num_modes > 5) throw ValueError("decoder config: num_modes must be in 1..5");
  if (cfg.blocks < 1 || cfg.heads < 1 || cfg.hidden < 1 || cfg.ffn_dim < 1 || cfg.horizon < 1)
    throw ValueError("decoder config: all dimensions must be positive");
  if (cfg.hidden % cfg.heads != 0) throw ValueError("decoder config: hidden must be divisible by heads");
}

void validate_prediction_set(const PredictionSet& pred, int horizon) {
  if (pred.trajectories.size() != pred.confidences.size() || pred.trajectories.empty())
    throw ValueError("prediction set: mode count mismatch");
  double sum = 0.0;
  for (double w : pred.confidences) {
    if (!(w > 0.0)) throw ValueError("prediction set: confidences must be positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValueError("prediction set: confidences must sum to 1");
  for (const auto& traj : pred.trajectories) {
    if (traj.size() != static_cast<std::size_t>(horizon))
      throw ValueError("prediction set: trajectory horizon mismatch");
    for (const auto& p : traj)
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw NumericError("prediction set: non-finite point");
  }
}

namespace {

std::string block_prefix(int b) { return "decoder.block" + std::to_string(b); }

// Multi-head attention with standard head concatenation. q_in/k_in/v_in are
// pre-projection inputs; positional embeddings are added by the caller.
Var attention(Tape& tape, nn::ParamStore& store, const std::string& prefix, Var q_in, Var k_in, Var v_in,
              int heads) {
  Var q = nn::linear(tape, store, q_in, prefix + ".q");
  Var k = nn::linear(tape, store, k_in, prefix + ".k");
  Var v = nn::linear(tape, store, v_in, prefix + ".v");
  const std::size_t hidden = tape.value(q).cols();
  const std::size_t head_dim = hidden / static_cast<std::size_t>(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Var merged{};
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * head_dim;
    Var qh = tape.slice_cols(q, c0, c0 + head_dim);
    Var kh = tape.slice_cols(k, c0, c0 + head_dim);
    Var vh = tape.slice_cols(v, c0, c0 + head_dim);
    Var alpha = tape.softmax_rows(tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt));
    Var oh = tape.matmul(alpha, vh);
    merged = h == 0 ? oh : tape.concat_cols(merged, oh);
  }
  return nn::linear(tape, store, merged, prefix + ".o");
}

}  // namespace

// Positions are a prefix sum of per-step offsets; expressed as a constant
// matmul so the gradient flows through the accumulation.
Tensor offset_prefix_sum_matrix(int horizon) {
  const std::size_t n = static_cast<std::size_t>(horizon) * 2;
  Tensor m = Tensor::zeros({n, n});
  for (int u = 0; u < horizon; ++u)
    for (int t = u; t < horizon; ++t)
      for (int c = 0; c < 2; ++c)
        m.at(static_cast<std::size_t>(u) * 2 + c, static_cast<std::size_t>(t) * 2 + c) = 1.0;
  return m;
}

void init_decoder_params(nn::ParamStore& store, const DecoderConfig& cfg, int memory_dim,
                         std::mt19937_64& rng) {
  validate_decoder_config(cfg);
  const std::size_t hidden = static_cast<std::size_t>(cfg.hidden);
  const std::size_t k = static_cast<std::size_t>(cfg.num_modes);
  nn::init_linear(store, "decoder.target_proj", static_cast<std::size_t>(memory_dim), hidden, rng);
  nn::glorot_init(store.create("decoder.mode_vectors", k, hidden), rng);
  nn::glorot_init(store.create("decoder.positional", k, hidden), rng);
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = block_prefix(b);
    nn::init_layer_norm(store, p + ".ln_self", hidden);
    for (const char* n : {".self.q", ".self.k", ".self.v", ".self.o"})
      nn::init_linear(store, p + n, hidden, hidden, rng);
    nn::init_layer_norm(store, p + ".ln_cross", hidden);
    nn::init_linear(store, p + ".cross.q", hidden, hidden, rng);
    nn::init_linear(store, p + ".cross.k", static_cast<std::size_t>(memory_dim), hidden, rng);
    nn::init_linear(store, p + ".cross.v", static_cast<std::size_t>(memory_dim), hidden, rng);
    nn::init_linear(store, p + ".cross.o", hidden, hidden, rng);
    nn::init_layer_norm(store, p + ".ln_ffn", hidden);
    nn::init_linear(store, p + ".ffn.l1", hidden, static_cast<std::size_t>(cfg.ffn_dim), rng);
    nn::init_linear(store, p + ".ffn.l2", static_cast<std::size_t>(cfg.ffn_dim), hidden, rng);
  }
  nn::init_layer_norm(store, "decoder.ln_out", hidden);
  nn::init_linear(store, "decoder.traj_head", hidden, static_cast<std::size_t>(cfg.horizon) * 2, rng);
  nn::init_linear(store, "decoder.conf_head", hidden, 1, rng);
}

Var build_queries(Tape& tape, nn::ParamStore& store, const DecoderConfig& cfg, Var target_row) {
  Var projected = nn::linear(tape, store, target_row, "decoder.target_proj");  // [1 x hidden]
  Var copies = tape.gather_rows(projected, std::vector<std::size_t>(cfg.num_modes, 0));
  return tape.add(copies, tape.param(store, "decoder.mode_vectors"));
}

DecodeVars decode(Tape& tape, nn::ParamStore& store, const DecoderConfig& cfg,
                  const SceneEmbeddingVars& emb) {
  validate_decoder_config(cfg);
  Var memory = emb.polylines;
  Var target = tape.gather_rows(memory, {emb.target_row});
  Var x = build_queries(tape, store, cfg, target);
  Var pos = tape.param(store, "decoder.positional");

  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = block_prefix(b);
    // Self-attention over mode queries; positions added to queries and keys.
    Var normed = nn::layer_norm(tape, store, x, p + ".ln_self");
    Var qk = tape.add(normed, pos);
    x = tape.add(x, attention(tape, store, p + ".self", qk, qk, normed, cfg.heads));
    // Cross-attention against polyline memories; positions on queries only.
    normed = nn::layer_norm(tape, store, x, p + ".ln_cross");
    Var q = tape.add(normed, pos);
    x = tape.add(x, attention(tape, store, p + ".cross", q, memory, memory, cfg.heads));
    // Feed-forward.
    normed = nn::layer_norm(tape, store, x, p + ".ln_ffn");
    Var ff = tape.relu(nn::linear(tape, store, normed, p + ".ffn.l1"));
    x = tape.add(x, nn::linear(tape, store, ff, p + ".ffn.l2"));
  }

  Var final_states = nn::layer_norm(tape, store, x, "decoder.ln_out");
  Var offsets = nn::linear(tape, store, final_states, "decoder.traj_head");
  Var positions = tape.matmul(offsets, tape.constant(offset_prefix_sum_matrix(cfg.horizon)));
  Var logits = tape.transpose(nn::linear(tape, store, final_states, "decoder.conf_head"));
  Var omega = tape.softmax_rows(logits);
  return DecodeVars{positions, logits, omega};
}

PredictionSet extract_prediction(const Tape& tape, const DecodeVars& vars, int horizon) {
  const Tensor& traj = tape.value(vars.trajectories);
  const Tensor& omega = tape.value(vars.confidences);
  PredictionSet pred;
  for (std::size_t m = 0; m < traj.rows(); ++m) {
    std::vector<Vec2> points;
    points.reserve(horizon);
    for (int t = 0; t < horizon; ++t)
      points.push_back({traj.at(m, static_cast<std::size_t>(t) * 2),
                        traj.at(m, static_cast<std::size_t>(t) * 2 + 1)});
    pred.trajectories.push_back(std::move(points));
    pred.confidences.push_back(omega.at(0, m));
  }
  validate_prediction_set(pred, horizon);
  return pred;
}

double mixture_nll(const PredictionSet& pred, const std::vector<Vec2>& ground_truth) {
  validate_prediction_set(pred, static_cast<int>(ground_truth.size()));
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> scores;
  scores.reserve(pred.trajectories.size());
  for (std::size_t m = 0; m < pred.trajectories.size(); ++m) {
    double sse = 0.0;
    for (std::size_t t = 0; t < ground_truth.size(); ++t) {
      const Vec2 d = pred.trajectories[m][t] - ground_truth[t];
      sse += d.x * d.x + d.y * d.y;
    }
    const double score = std::log(pred.confidences[m]) - 0.5 * sse;
    scores.push_back(score);
    best = std::max(best, score);
  }
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - best);
  const double loss = -(best + std::log(sum));
  if (!std::isfinite(loss)) throw NumericError("mixture_nll: non-finite loss");
  return loss;
}

Var mixture_nll_loss(Tape& tape, const DecodeVars& vars, const std::vector<Vec2>& ground_truth) {
  const Tensor& traj = tape.value(vars.trajectories);
  const std::size_t k = traj.rows();
  if (traj.cols() != ground_truth.size() * 2) throw ValueError("mixture_nll_loss: horizon mismatch");
  std::vector<double> flat;
  flat.reserve(ground_truth.size() * 2);
  for (const auto& p : ground_truth) {
    flat.push_back(p.x);
    flat.push_back(p.y);
  }
  Var gt = tape.gather_rows(tape.constant(Tensor::row(flat)), std::vector<std::size_t>(k, 0));
  Var diff = tape.sub(vars.trajectories, gt);
  Var sse = tape.row_sum(tape.mul(diff, diff));            // [k x 1]
  Var scores = tape.add(vars.logits, tape.scale(tape.transpose(sse), -0.5));  // [1 x k]
  // -LSE(log_softmax(logits) - sse/2) = LSE(logits) - LSE(logits - sse/2)
  return tape.sub(tape.logsumexp_rows(vars.logits), tape.logsumexp_rows(scores));
}

PredictionSet predict_world(const PredictionSet& pred, const Frame& frame) {
  PredictionSet out = pred;
  for (auto& traj : out.trajectories)
    for (auto& p : traj) p = frame.to_world(p);
  return out;
}

}  // namespace vmp
