#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dvs2s/tensor.hpp"

namespace dvs2s {

// Minimal reverse-mode tape. Operations append nodes in topological order;
// backward() walks the tape in reverse once from a scalar root. Gradients are
// allocated lazily, so constants and untouched branches cost nothing.
//
// The forward arithmetic matches the plain (untaped) model paths operation for
// operation: both sides share dot_kernel and the same max-stabilized softmax
// formulas, which keeps taped losses bit-identical to their plain evaluations.
class Tape {
 public:
  using Var = int32_t;
  static constexpr Var kNone = -1;

  Var leaf(const Tensor& value, bool needs_grad);
  Var constant(Tensor value);

  Var add(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var clip(Var a, double lo, double hi);
  Var concat(Var a, Var b);
  Var dot(Var a, Var b);
  Var pick(Var v, int64_t i);
  Var sum(Var v);
  Var stack(const std::vector<Var>& scalars);
  Var softmax(Var scores);
  Var log_softmax(Var scores);

  // z (*) cand + (1 - z) (*) prev  -- the GRU state interpolation.
  Var gate_mix(Var z, Var cand, Var prev);

  Var matvec(Var w, Var x);
  // W[:, lo:hi] x
  Var matvec_cols(Var w, Var x, int64_t lo, int64_t hi);
  // Row lookup with scatter-add gradient (embedding fetch).
  Var row(Var m, int64_t r);
  // out[k] = W[rows[k], :] . x + b[rows[k]] -- the restricted projection.
  Var affine_rows(Var w, Var b, Var x, std::vector<int32_t> rows);
  // sum_j weights[j] * value(vectors[j])
  Var weighted_sum(Var weights, std::vector<Var> vectors);
  // sum_j t_j log x_j + (1 - t_j) log(1 - x_j); x must already be clipped
  // away from {0, 1}.
  Var bernoulli_log_prob(Var x, std::vector<uint8_t> bits);

  const Tensor& value(Var v) const { return nodes_[static_cast<size_t>(v)].val; }
  double scalar(Var v) const { return value(v)[0]; }
  // Zero after backward() unless the node received gradient.
  const Tensor& gradient(Var v);

  // Runs reverse accumulation from a scalar root, seeding d(root) = seed.
  // Clears previous gradients first; may be called repeatedly.
  void backward(Var root, double seed = 1.0);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;  // empty until touched
    bool needs_grad = false;
    std::function<void(Tape&, Node&)> back;
  };

  Var push(Tensor val, bool needs_grad, std::function<void(Tape&, Node&)> back);
  Tensor& grad_buf(Var v);
  bool wants(Var v) const { return nodes_[static_cast<size_t>(v)].needs_grad; }

  std::vector<Node> nodes_;
};

}  // namespace dvs2s
