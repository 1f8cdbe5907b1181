#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "vmp/encoder.hpp"
#include "vmp/geometry.hpp"
#include "vmp/nn/tape.hpp"
#include "vmp/vectorize.hpp"

namespace vmp {

struct DecoderConfig {
  int num_modes = 5;  // k, 1..5
  int blocks = 2;
  int heads = 4;
  int hidden = 128;
  int ffn_dim = 256;
  int horizon = 25;  // T
};

void validate_decoder_config(const DecoderConfig& cfg);

struct PredictionSet {
  std::vector<std::vector<Vec2>> trajectories;  // k x T
  std::vector<double> confidences;              // on the simplex
};

void validate_prediction_set(const PredictionSet& pred, int horizon);

struct DecodeVars {
  nn::Var trajectories;  // [k x 2T] positions, (x, y) interleaved per step
  nn::Var logits;        // [1 x k]
  nn::Var confidences;   // [1 x k] softmax of logits
};

void init_decoder_params(nn::ParamStore& store, const DecoderConfig& cfg, int memory_dim,
                         std::mt19937_64& rng);

// k mode queries (target embedding + learned mode vectors) attend over the
// polyline memories through pre-norm transformer blocks; a linear head emits
// per-step offsets accumulated into positions, another the mode logits.
DecodeVars decode(nn::Tape& tape, nn::ParamStore& store, const DecoderConfig& cfg,
                  const SceneEmbeddingVars& emb);

// Queries only, exposed for inspection/tests: proj(target) + mode vectors.
nn::Var build_queries(nn::Tape& tape, nn::ParamStore& store, const DecoderConfig& cfg, nn::Var target_row);

// Constant matrix turning per-step (x, y) offsets into positions by prefix
// sum; used by every trajectory head.
nn::Tensor offset_prefix_sum_matrix(int horizon);

PredictionSet extract_prediction(const nn::Tape& tape, const DecodeVars& vars, int horizon);

// Corrected mixture negative log-likelihood:
//   -logsumexp_k(log w_k - 0.5 * sum_t ||y_t - traj_t^k||^2)
// (the T log 2pi correction cancels the unit-Gaussian normalizer exactly).
double mixture_nll(const PredictionSet& pred, const std::vector<Vec2>& ground_truth);

// Same loss on the tape for training; ground truth in agent frame.
nn::Var mixture_nll_loss(nn::Tape& tape, const DecodeVars& vars, const std::vector<Vec2>& ground_truth);

// Rigid inverse transform back to world coordinates; confidences unchanged.
PredictionSet predict_world(const PredictionSet& pred, const Frame& frame);

}  // namespace vmp
