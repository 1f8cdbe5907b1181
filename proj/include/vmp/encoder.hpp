#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vmp/nn/layers.hpp"
#include "vmp/nn/tape.hpp"
#include "vmp/vectorize.hpp"

namespace vmp {

struct EncoderConfig {
  int mp_layers = 3;
  int mp_hidden = 64;
  int attn_heads = 2;
  int attn_head_dim = 64;

  // Width of the attention output (heads are averaged, not concatenated).
  int embedding_dim() const { return attn_head_dim; }
};

void validate_encoder_config(const EncoderConfig& cfg);

// Node rows are p_start | p_end | f | kind one-hot.
inline constexpr std::size_t kNodeInputWidth = 4 + kFeatureDim + kNumPolylineKinds;

// Node-to-polyline assignment plus the directed message pairs: every node
// pairs with all other nodes of its polyline; single-node polylines pair
// with themselves so no aggregation is empty.
struct PolylinePartition {
  std::vector<std::size_t> node_polyline;
  std::vector<std::size_t> pair_src;
  std::vector<std::size_t> pair_dst;
  std::size_t num_polylines = 0;

  std::size_t num_nodes() const { return node_polyline.size(); }

  static PolylinePartition from_sizes(const std::vector<std::size_t>& polyline_sizes);
};

// Builds the [N x 17] node matrix and partition for a vectorized scene.
struct SceneGraphInputs {
  nn::Tensor node_features;
  PolylinePartition partition;
  std::size_t target_polyline = 0;
};

SceneGraphInputs build_graph_inputs(const VectorizedScene& vs);

// message(src_rows, dst_rows) -> per-pair message rows;
// update(h) -> per-node transformed rows.
using MessageFn = std::function<nn::Var(nn::Tape&, nn::Var, nn::Var)>;
using UpdateFn = std::function<nn::Var(nn::Tape&, nn::Var)>;

// One message-passing layer: out = update(h) | max_j message(h_i, h_j),
// doubling the feature width.
nn::Var subgraph_layer(nn::Tape& tape, nn::Var h, const PolylinePartition& part, const MessageFn& message,
                       const UpdateFn& update);

// Columnwise max over each polyline's nodes.
nn::Var polyline_readout(nn::Tape& tape, nn::Var h, const PolylinePartition& part);

// Single-head graph transformer convolution over the fully connected
// polyline graph (self included):
//   out_k = W1 d_k + sum_l softmax_l((W3 d_k)^T (W4 d_l) / sqrt(head_dim)) W2 d_l
// Weight vars are [D_in x head_dim].
nn::Var global_attention_head(nn::Tape& tape, nn::Var d, nn::Var w1, nn::Var w2, nn::Var w3, nn::Var w4,
                              std::size_t head_dim);

struct SceneEmbeddingVars {
  nn::Var polylines;  // [M x embedding_dim]
  std::size_t target_row = 0;
};

void init_encoder_params(nn::ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng);

SceneEmbeddingVars encode(nn::Tape& tape, nn::ParamStore& store, const EncoderConfig& cfg,
                          const VectorizedScene& vs);

}  // namespace vmp
