#pragma once

#include <optional>
#include <random>

#include "vmp/nn/params.hpp"
#include "vmp/nn/tape.hpp"
#include "vmp/nn/tensor.hpp"

namespace vmp {

struct SngpConfig {
  int rff_dim = 256;          // D_L (2048 at paper scale; 256 is the desk default)
  double discount = 0.9999;   // m
  double ridge = 0.1;         // s
  double inv_lengthscale = 0.05;
  int sn_iters = 1;
  double sn_bound = 1.0;
  int output_dim = 50;        // flattened T x 2
};

void validate_sngp_config(const SngpConfig& cfg);

// Frozen random-feature expansion plus the Laplace precision estimate.
// W_L and b_L are sampled once and never trained; the precision follows
//   P_0 = s * I,   P_t = m * P_{t-1} + (1 - m) * sum_i phi_i phi_i^T
// and the posterior variance of an input is U = phi^T P^{-1} phi.
struct SngpState {
  SngpConfig cfg;
  nn::Tensor w_l;        // [D_L x D]
  nn::Tensor b_l;        // [1 x D_L]
  nn::Tensor precision;  // [D_L x D_L], symmetric positive definite

  // caches
  nn::Tensor neg_wl_t;  // [D x D_L], -W_L^T
  mutable std::optional<nn::Tensor> covariance_cache;
};

SngpState init_sngp_state(const SngpConfig& cfg, int embedding_dim, std::mt19937_64& rng);

// phi = sqrt(2 / D_L) * cos(-W_L d + b_L)
nn::Tensor rff(const SngpState& state, const nn::Tensor& d);
nn::Var rff(nn::Tape& tape, const SngpState& state, nn::Var d);

// One recursion step over a batch of feature rows [B x D_L]; symmetry is
// re-enforced after the update. An empty batch still applies the discount.
void precision_update(SngpState& state, const nn::Tensor& phi_batch);

// precision = s * I; cached covariance invalidated.
void reset_covariance(SngpState& state);

// Materialized inverse of the precision (cached until the next update).
const nn::Tensor& covariance(const SngpState& state);

// U = phi^T P^{-1} phi via an SPD solve; throws NumericError when the
// precision has lost positive definiteness.
double uncertainty(const SngpState& state, const nn::Tensor& phi);

// Persistent power-iteration state for the spectral-normalized layer.
struct SpectralPower {
  nn::Tensor u;  // [1 x rows]
  nn::Tensor v;  // [1 x cols]
};

SpectralPower init_spectral_power(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

// Runs `iters` power-iteration steps (vectors persist across calls) and
// returns min(1, bound / sigma_1).
double spectral_scale(const nn::Tensor& w, SpectralPower& power, int iters, double bound);

// W * min(1, bound / sigma_1)
nn::Tensor spectral_normalize(const nn::Tensor& w, SpectralPower& power, int iters, double bound);

}  // namespace vmp
