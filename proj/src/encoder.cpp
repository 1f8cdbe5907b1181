#include "vmp/encoder.hpp"

#include <cmath>

#include "vmp/error.hpp"

namespace vmp {

using nn::Tape;
using nn::Tensor;
using nn::Var;

void validate_encoder_config(const EncoderConfig& cfg) {
  if (cfg.mp_layers < 1 || cfg.mp_hidden < 1 || cfg.attn_heads < 1 || cfg.attn_head_dim < 1)
    throw ValueError("encoder config: all dimensions must be positive");
}

PolylinePartition PolylinePartition::from_sizes(const std::vector<std::size_t>& polyline_sizes) {
  PolylinePartition part;
  part.num_polylines = polyline_sizes.size();
  std::size_t base = 0;
  for (std::size_t p = 0; p < polyline_sizes.size(); ++p) {
    const std::size_t n = polyline_sizes[p];
    if (n == 0) throw ValueError("polyline partition: empty polyline");
    for (std::size_t i = 0; i < n; ++i) {
      part.node_polyline.push_back(p);
      if (n == 1) {
        // Self-fallback: a lone node aggregates its own message.
        part.pair_src.push_back(base);
        part.pair_dst.push_back(base);
      } else {
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          part.pair_src.push_back(base + i);
          part.pair_dst.push_back(base + j);
        }
      }
    }
    base += n;
  }
  return part;
}

SceneGraphInputs build_graph_inputs(const VectorizedScene& vs) {
  if (vs.subgraphs.empty()) throw ValueError("build_graph_inputs: scene has no subgraphs");
  std::vector<std::size_t> sizes;
  sizes.reserve(vs.subgraphs.size());
  std::size_t total = 0;
  for (const auto& sg : vs.subgraphs) {
    sizes.push_back(sg.nodes.size());
    total += sg.nodes.size();
  }
  SceneGraphInputs in;
  in.partition = PolylinePartition::from_sizes(sizes);
  in.target_polyline = vs.target_index;
  in.node_features = Tensor::zeros({total, kNodeInputWidth});
  std::size_t row = 0;
  for (const auto& sg : vs.subgraphs) {
    const auto onehot = sg.kind_onehot();
    for (const auto& node : sg.nodes) {
      std::size_t c = 0;
      in.node_features.at(row, c++) = node.p_start.x;
      in.node_features.at(row, c++) = node.p_start.y;
      in.node_features.at(row, c++) = node.p_end.x;
      in.node_features.at(row, c++) = node.p_end.y;
      for (double v : node.f) in.node_features.at(row, c++) = v;
      for (double v : onehot) in.node_features.at(row, c++) = v;
      ++row;
    }
  }
  return in;
}

Var subgraph_layer(Tape& tape, Var h, const PolylinePartition& part, const MessageFn& message,
                   const UpdateFn& update) {
  if (tape.value(h).rows() != part.num_nodes())
    throw ValueError("subgraph_layer: node count does not match partition");
  Var src = tape.gather_rows(h, part.pair_src);
  Var dst = tape.gather_rows(h, part.pair_dst);
  Var messages = message(tape, src, dst);
  Var agg = tape.segment_max(messages, part.pair_src, part.num_nodes());
  Var own = update(tape, h);
  return tape.concat_cols(own, agg);
}

Var polyline_readout(Tape& tape, Var h, const PolylinePartition& part) {
  return tape.maxpool_rows(h, part.node_polyline, part.num_polylines);
}

Var global_attention_head(Tape& tape, Var d, Var w1, Var w2, Var w3, Var w4, std::size_t head_dim) {
  Var q = tape.matmul(d, w3);
  Var k = tape.matmul(d, w4);
  Var scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  Var alpha = tape.softmax_rows(scores);
  Var values = tape.matmul(d, w2);
  return tape.add(tape.matmul(d, w1), tape.matmul(alpha, values));
}

namespace {

std::string mp_prefix(int layer) { return "encoder.mp" + std::to_string(layer); }

// One-hidden-layer MLP: linear -> layer norm -> relu -> linear. The message
// variant splits the first linear over the (src | dst) concatenation so the
// pair matrix never materializes at full width.
void init_mlp(nn::ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
              std::size_t out, std::mt19937_64& rng) {
  nn::init_linear(store, prefix + ".l1", in, hidden, rng);
  nn::init_layer_norm(store, prefix + ".ln", hidden);
  nn::init_linear(store, prefix + ".l2", hidden, out, rng);
}

Var apply_mlp(Tape& tape, nn::ParamStore& store, const std::string& prefix, Var x) {
  Var t = nn::linear(tape, store, x, prefix + ".l1");
  t = nn::layer_norm(tape, store, t, prefix + ".ln");
  t = tape.relu(t);
  return nn::linear(tape, store, t, prefix + ".l2");
}

void init_message_mlp(nn::ParamStore& store, const std::string& prefix, std::size_t width,
                      std::mt19937_64& rng) {
  nn::glorot_init(store.create(prefix + ".w_src", width, width), rng);
  nn::glorot_init(store.create(prefix + ".w_dst", width, width), rng);
  store.create(prefix + ".b1", 1, width);
  nn::init_layer_norm(store, prefix + ".ln", width);
  nn::init_linear(store, prefix + ".l2", width, width, rng);
}

MessageFn message_mlp(nn::ParamStore& store, const std::string& prefix) {
  return [&store, prefix](Tape& tape, Var src, Var dst) {
    Var pre = tape.add(tape.matmul(src, tape.param(store, prefix + ".w_src")),
                       tape.matmul(dst, tape.param(store, prefix + ".w_dst")));
    pre = tape.add(pre, tape.param(store, prefix + ".b1"));
    Var t = nn::layer_norm(tape, store, pre, prefix + ".ln");
    t = tape.relu(t);
    return nn::linear(tape, store, t, prefix + ".l2");
  };
}

}  // namespace

void init_encoder_params(nn::ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng) {
  validate_encoder_config(cfg);
  const std::size_t hidden = static_cast<std::size_t>(cfg.mp_hidden);
  nn::init_linear(store, "encoder.in_proj", kNodeInputWidth, hidden, rng);
  for (int l = 0; l < cfg.mp_layers; ++l) {
    if (l > 0) nn::init_linear(store, mp_prefix(l) + ".reproj", hidden * 2, hidden, rng);
    init_message_mlp(store, mp_prefix(l) + ".msg", hidden, rng);
    init_mlp(store, mp_prefix(l) + ".upd", hidden, hidden, hidden, rng);
  }
  const std::size_t d_in = hidden * 2;
  const std::size_t head = static_cast<std::size_t>(cfg.attn_head_dim);
  for (int h = 0; h < cfg.attn_heads; ++h) {
    const std::string prefix = "encoder.attn.h" + std::to_string(h);
    nn::glorot_init(store.create(prefix + ".w1", d_in, head), rng);
    nn::glorot_init(store.create(prefix + ".w2", d_in, head), rng);
    nn::glorot_init(store.create(prefix + ".w3", d_in, head), rng);
    nn::glorot_init(store.create(prefix + ".w4", d_in, head), rng);
  }
}

SceneEmbeddingVars encode(Tape& tape, nn::ParamStore& store, const EncoderConfig& cfg,
                          const VectorizedScene& vs) {
  validate_encoder_config(cfg);
  const SceneGraphInputs in = build_graph_inputs(vs);
  Var h = nn::linear(tape, store, tape.constant(in.node_features), "encoder.in_proj");
  for (int l = 0; l < cfg.mp_layers; ++l) {
    if (l > 0) h = nn::linear(tape, store, h, mp_prefix(l) + ".reproj");
    const std::string msg_prefix = mp_prefix(l) + ".msg";
    const std::string upd_prefix = mp_prefix(l) + ".upd";
    h = subgraph_layer(tape, h, in.partition, message_mlp(store, msg_prefix),
                       [&store, upd_prefix](Tape& t, Var x) { return apply_mlp(t, store, upd_prefix, x); });
  }
  Var d = polyline_readout(tape, h, in.partition);
  Var sum{};
  for (int head = 0; head < cfg.attn_heads; ++head) {
    const std::string prefix = "encoder.attn.h" + std::to_string(head);
    Var out = global_attention_head(tape, d, tape.param(store, prefix + ".w1"),
                                    tape.param(store, prefix + ".w2"), tape.param(store, prefix + ".w3"),
                                    tape.param(store, prefix + ".w4"),
                                    static_cast<std::size_t>(cfg.attn_head_dim));
    sum = head == 0 ? out : tape.add(sum, out);
  }
  Var averaged = tape.scale(sum, 1.0 / static_cast<double>(cfg.attn_heads));
  return SceneEmbeddingVars{averaged, in.target_polyline};
}

}  // namespace vmp
