#include "vmp/nn/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace vmp::nn {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

MapC map_of(const Tensor& t) {
  return MapC(t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MapM map_of(Tensor& t) {
  return MapM(t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ValueError(std::string(op) + ": rank-2 tensor required");
}

void ensure_finite(const Tensor& t, const char* op) {
  for (double v : t.values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value produced");
  }
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back), nullptr, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor t) {
  require_rank2(t, "constant");
  ensure_finite(t, "constant");
  return push(std::move(t), nullptr);
}

Var Tape::param(ParamStore& store, const std::string& name) {
  Tensor t = store.value(name);
  require_rank2(t, "param");
  ensure_finite(t, "param");
  Var v = push(std::move(t), nullptr);
  nodes_[v.id].store = &store;
  nodes_[v.id].param_name = name;
  return v;
}

const Tensor& Tape::grad(Var v) const {
  if (!backward_done_) throw ValueError("grad: backward has not run");
  return nodes_[v.id].grad;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require_rank2(A, "matmul");
  require_rank2(B, "matmul");
  if (A.cols() != B.rows()) throw ValueError("matmul: inner dimensions mismatch");
  Tensor out = Tensor::zeros({A.rows(), B.cols()});
  map_of(out).noalias() = map_of(A) * map_of(B);
  ensure_finite(out, "matmul");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, b, o](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    map_of(t.grad_ref(a)).noalias() += map_of(g) * map_of(t.val(b)).transpose();
    map_of(t.grad_ref(b)).noalias() += map_of(t.val(a)).transpose() * map_of(g);
  };
  return o;
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require_rank2(A, "add");
  require_rank2(B, "add");
  const bool broadcast = B.rows() == 1 && A.rows() > 1 && B.cols() == A.cols();
  if (!broadcast && !A.same_shape(B)) throw ValueError("add: shape mismatch");
  Tensor out = A;
  if (broadcast) {
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) += B.at(0, c);
  } else {
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += B.values[i];
  }
  ensure_finite(out, "add");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, b, o, broadcast](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (std::size_t i = 0; i < g.values.size(); ++i) ga.values[i] += g.values[i];
    if (broadcast) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb.at(0, c) += g.at(r, c);
    } else {
      for (std::size_t i = 0; i < g.values.size(); ++i) gb.values[i] += g.values[i];
    }
  };
  return o;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require_rank2(A, "mul");
  require_rank2(B, "mul");
  const bool broadcast = B.rows() == 1 && A.rows() > 1 && B.cols() == A.cols();
  if (!broadcast && !A.same_shape(B)) throw ValueError("mul: shape mismatch");
  Tensor out = A;
  if (broadcast) {
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) *= B.at(0, c);
  } else {
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= B.values[i];
  }
  ensure_finite(out, "mul");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, b, o, broadcast](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    const Tensor& A2 = t.val(a);
    const Tensor& B2 = t.val(b);
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    if (broadcast) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) {
          ga.at(r, c) += g.at(r, c) * B2.at(0, c);
          gb.at(0, c) += g.at(r, c) * A2.at(r, c);
        }
    } else {
      for (std::size_t i = 0; i < g.values.size(); ++i) {
        ga.values[i] += g.values[i] * B2.values[i];
        gb.values[i] += g.values[i] * A2.values[i];
      }
    }
  };
  return o;
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require_rank2(A, "concat_cols");
  require_rank2(B, "concat_cols");
  if (A.rows() != B.rows()) throw ValueError("concat_cols: row count mismatch");
  const std::size_t ca = A.cols();
  const std::size_t cb = B.cols();
  Tensor out = Tensor::zeros({A.rows(), ca + cb});
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t c = 0; c < ca; ++c) out.at(r, c) = A.at(r, c);
    for (std::size_t c = 0; c < cb; ++c) out.at(r, ca + c) = B.at(r, c);
  }
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, b, o, ca, cb](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < ca; ++c) ga.at(r, c) += g.at(r, c);
      for (std::size_t c = 0; c < cb; ++c) gb.at(r, c) += g.at(r, ca + c);
    }
  };
  return o;
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
  const Tensor& A = val(a);
  require_rank2(A, "slice_cols");
  if (c0 >= c1 || c1 > A.cols()) throw ValueError("slice_cols: bad column range");
  Tensor out = Tensor::zeros({A.rows(), c1 - c0});
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = A.at(r, c);
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o, c0, c1](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = c0; c < c1; ++c) ga.at(r, c) += g.at(r, c - c0);
  };
  return o;
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> indices) {
  const Tensor& A = val(a);
  require_rank2(A, "gather_rows");
  for (auto i : indices)
    if (i >= A.rows()) throw ValueError("gather_rows: index out of range");
  Tensor out = Tensor::zeros({indices.size(), A.cols()});
  for (std::size_t r = 0; r < indices.size(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) = A.at(indices[r], c);
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o, idx = std::move(indices)](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga.at(idx[r], c) += g.at(r, c);
  };
  return o;
}

Var Tape::segment_max(Var a, std::vector<std::size_t> segment_ids, std::size_t num_segments) {
  const Tensor& A = val(a);
  require_rank2(A, "segment_max");
  if (segment_ids.size() != A.rows()) throw ValueError("segment_max: one segment id per row required");
  if (num_segments == 0) throw ValueError("segment_max: empty segmentation");
  for (auto s : segment_ids)
    if (s >= num_segments) throw ValueError("segment_max: segment id out of range");
  const std::size_t C = A.cols();
  Tensor out = Tensor::zeros({num_segments, C});
  std::vector<std::size_t> argmax(num_segments * C, 0);
  std::vector<bool> seen(num_segments, false);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const std::size_t s = segment_ids[r];
    for (std::size_t c = 0; c < C; ++c) {
      const double v = A.at(r, c);
      if (!seen[s] || v > out.at(s, c)) {
        out.at(s, c) = v;
        argmax[s * C + c] = r;
      }
    }
    seen[s] = true;
  }
  for (std::size_t s = 0; s < num_segments; ++s)
    if (!seen[s]) throw ValueError("segment_max: segment without rows");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o, C, am = std::move(argmax)](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t s = 0; s < g.rows(); ++s)
      for (std::size_t c = 0; c < C; ++c) ga.at(am[s * C + c], c) += g.at(s, c);
  };
  return o;
}

Var Tape::max_over_set(Var a) {
  const Tensor& A = val(a);
  require_rank2(A, "max_over_set");
  return segment_max(a, std::vector<std::size_t>(A.rows(), 0), 1);
}

Var Tape::relu(Var a) {
  Tensor out = val(a);
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.values.size(); ++i)
      if (x.values[i] > 0.0) ga.values[i] += g.values[i];
  };
  return o;
}

Var Tape::cosine(Var a) {
  Tensor out = val(a);
  for (double& v : out.values) v = std::cos(v);
  ensure_finite(out, "cosine");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    const Tensor& x = t.val(a);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.values.size(); ++i) ga.values[i] -= g.values[i] * std::sin(x.values[i]);
  };
  return o;
}

Var Tape::scale(Var a, double c) {
  if (!std::isfinite(c)) throw ValueError("scale: non-finite factor");
  Tensor out = val(a);
  for (double& v : out.values) v *= c;
  ensure_finite(out, "scale");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o, c](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.values.size(); ++i) ga.values[i] += c * g.values[i];
  };
  return o;
}

Var Tape::transpose(Var a) {
  const Tensor& A = val(a);
  require_rank2(A, "transpose");
  Tensor out = Tensor::zeros({A.cols(), A.rows()});
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) out.at(c, r) = A.at(r, c);
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga.at(c, r) += g.at(r, c);
  };
  return o;
}

Var Tape::reshape(Var a, std::size_t rows, std::size_t cols) {
  const Tensor& A = val(a);
  require_rank2(A, "reshape");
  if (rows * cols != A.values.size()) throw ValueError("reshape: element count mismatch");
  Tensor out{{rows, cols}, A.values};
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.values.size(); ++i) ga.values[i] += g.values[i];
  };
  return o;
}

Var Tape::softmax_rows(Var a) {
  const Tensor& A = val(a);
  require_rank2(A, "softmax_rows");
  Tensor out = A;
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < A.cols(); ++c) mx = std::max(mx, A.at(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) {
      out.at(r, c) = std::exp(A.at(r, c) - mx);
      sum += out.at(r, c);
    }
    for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) /= sum;
  }
  ensure_finite(out, "softmax_rows");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    const Tensor& y = t.val(o);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
    }
  };
  return o;
}

Var Tape::layer_norm_rows(Var a, double eps) {
  const Tensor& A = val(a);
  require_rank2(A, "layer_norm_rows");
  const std::size_t C = A.cols();
  Tensor out = A;
  std::vector<double> inv_std(A.rows());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += A.at(r, c);
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = A.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(C);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < C; ++c) out.at(r, c) = (A.at(r, c) - mean) * inv_std[r];
  }
  ensure_finite(out, "layer_norm_rows");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o, C, inv = std::move(inv_std)](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    const Tensor& y = t.val(o);  // normalized values
    Tensor& ga = t.grad_ref(a);
    const double n = static_cast<double>(C);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double mean_g = 0.0;
      double mean_gy = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        mean_g += g.at(r, c);
        mean_gy += g.at(r, c) * y.at(r, c);
      }
      mean_g /= n;
      mean_gy /= n;
      for (std::size_t c = 0; c < C; ++c)
        ga.at(r, c) += inv[r] * (g.at(r, c) - mean_g - y.at(r, c) * mean_gy);
    }
  };
  return o;
}

Var Tape::logsumexp_rows(Var a) {
  const Tensor& A = val(a);
  require_rank2(A, "logsumexp_rows");
  Tensor out = Tensor::zeros({A.rows(), 1});
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < A.cols(); ++c) mx = std::max(mx, A.at(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) sum += std::exp(A.at(r, c) - mx);
    out.at(r, 0) = mx + std::log(sum);
  }
  ensure_finite(out, "logsumexp_rows");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    const Tensor& x = t.val(a);
    const Tensor& lse = t.val(o);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c)
        ga.at(r, c) += g.at(r, 0) * std::exp(x.at(r, c) - lse.at(r, 0));
  };
  return o;
}

Var Tape::row_sum(Var a) {
  const Tensor& A = val(a);
  require_rank2(A, "row_sum");
  Tensor out = Tensor::zeros({A.rows(), 1});
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) s += A.at(r, c);
    out.at(r, 0) = s;
  }
  ensure_finite(out, "row_sum");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o](Tape& t) {
    const Tensor& g = t.nodes_[o.id].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga.at(r, c) += g.at(r, 0);
  };
  return o;
}

Var Tape::sum_all(Var a) {
  const Tensor& A = val(a);
  require_rank2(A, "sum_all");
  double s = 0.0;
  for (double v : A.values) s += v;
  Tensor out = Tensor::scalar(s);
  ensure_finite(out, "sum_all");
  Var o = push(std::move(out), nullptr);
  nodes_[o.id].back = [a, o](Tape& t) {
    const double g = t.nodes_[o.id].grad.values[0];
    Tensor& ga = t.grad_ref(a);
    for (double& v : ga.values) v += g;
  };
  return o;
}

void Tape::backward(Var loss) {
  const Tensor& L = val(loss);
  if (L.rank() != 2 || L.rows() != 1 || L.cols() != 1)
    throw ValueError("backward: loss must be a scalar");
  for (std::size_t i = 0; i <= loss.id; ++i) nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
  nodes_[loss.id].grad.values[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
  for (std::size_t i = 0; i <= loss.id; ++i) {
    if (nodes_[i].store != nullptr) nodes_[i].store->accumulate_grad(nodes_[i].param_name, nodes_[i].grad);
  }
  backward_done_ = true;
}

}  // namespace vmp::nn
