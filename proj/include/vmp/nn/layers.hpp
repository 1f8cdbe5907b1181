#pragma once

#include <random>
#include <string>

#include "vmp/nn/params.hpp"
#include "vmp/nn/tape.hpp"
#include "vmp/rng.hpp"

namespace vmp::nn {

// Glorot-uniform fill: +-sqrt(6 / (fan_in + fan_out)).
inline void glorot_init(Tensor& t, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  for (double& v : t.values) v = uniform_real(rng, -bound, bound);
}

// Linear layer parameters: <name>.w [in x out], <name>.b [1 x out] (zeros).
inline void init_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                        std::mt19937_64& rng) {
  glorot_init(store.create(name + ".w", in, out), rng);
  store.create(name + ".b", 1, out);
}

inline Var linear(Tape& tape, ParamStore& store, Var x, const std::string& name) {
  return tape.add(tape.matmul(x, tape.param(store, name + ".w")), tape.param(store, name + ".b"));
}

// Layer norm with learnable affine: <name>.g (ones), <name>.b (zeros).
inline void init_layer_norm(ParamStore& store, const std::string& name, std::size_t dim) {
  Tensor& g = store.create(name + ".g", 1, dim);
  for (double& v : g.values) v = 1.0;
  store.create(name + ".b", 1, dim);
}

inline Var layer_norm(Tape& tape, ParamStore& store, Var x, const std::string& name) {
  Var normed = tape.layer_norm_rows(x);
  return tape.add(tape.mul(normed, tape.param(store, name + ".g")), tape.param(store, name + ".b"));
}

}  // namespace vmp::nn
