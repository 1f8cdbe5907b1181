#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "vmp/nn/params.hpp"
#include "vmp/nn/tensor.hpp"

namespace vmp::nn {

struct Var {
  std::size_t id = 0;
};

// Define-by-run reverse-mode tape. A tape is built fresh for each forward
// pass; backward() walks nodes in reverse creation order and accumulates
// parameter gradients into the bound ParamStore.
//
// All ops operate on rank-2 tensors and trap NaN/Inf in their outputs.
class Tape {
 public:
  Var constant(Tensor t);
  Var param(ParamStore& store, const std::string& name);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const;

  Var matmul(Var a, Var b);
  // Elementwise add; also accepts b of shape [1 x C] broadcast over rows of a.
  Var add(Var a, Var b);
  // Elementwise multiply; same broadcast rule as add.
  Var mul(Var a, Var b);
  Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, std::size_t c0, std::size_t c1);
  Var gather_rows(Var a, std::vector<std::size_t> indices);
  // Columnwise max over the rows of each segment; every segment must own
  // at least one row. Gradient flows to the first maximal row.
  Var segment_max(Var a, std::vector<std::size_t> segment_ids, std::size_t num_segments);
  // Columnwise max over all rows -> [1 x C].
  Var max_over_set(Var a);
  // Alias for the segmented form (pooling rows grouped by partition).
  Var maxpool_rows(Var a, std::vector<std::size_t> segment_ids, std::size_t num_segments) {
    return segment_max(a, std::move(segment_ids), num_segments);
  }
  Var relu(Var a);
  Var cosine(Var a);
  Var scale(Var a, double c);
  Var transpose(Var a);
  // Row-major reinterpretation to [rows x cols]; element count must match.
  Var reshape(Var a, std::size_t rows, std::size_t cols);
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var a, double eps = 1e-5);
  Var logsumexp_rows(Var a);
  Var row_sum(Var a);
  Var sum_all(Var a);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients of every reachable
  // node; parameter leaves add their gradient into their ParamStore.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;
    ParamStore* store = nullptr;
    std::string param_name;
  };

  Var push(Tensor value, std::function<void(Tape&)> back);
  Tensor& grad_ref(Var v) { return nodes_[v.id].grad; }
  const Tensor& val(Var v) const { return nodes_[v.id].value; }

  // Deque keeps value/grad references stable while later ops append nodes.
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace vmp::nn
