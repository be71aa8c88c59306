#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "stylex/tensor.hpp"

namespace stylex {

using VarId = int;
inline constexpr VarId kNoVar = -1;

// Reverse-mode autodiff over a per-step tape. Each forward pass builds a
// fresh Graph; backward() walks the tape in reverse. Node values are owned
// by the graph, so parameter tensors are copied in at bind time and their
// gradients read back out after backward().
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  VarId leaf(Tensor value, bool requires_grad);
  VarId constant(Tensor value) { return leaf(std::move(value), false); }

  // Elementwise / affine.
  VarId add(VarId a, VarId b);                       // same shape
  VarId add_scaled(VarId a, VarId b, double ca, double cb);
  VarId mul(VarId a, VarId b);                       // same shape, elementwise
  VarId scale(VarId a, double c);
  VarId add_bias(VarId x, VarId bias);               // bias over last dim
  VarId sigmoid(VarId x);
  VarId gelu(VarId x);

  // Linear algebra.
  VarId matmul(VarId a, VarId b);                    // (M,K)x(K,N)
  VarId bmm(VarId a, VarId b, bool trans_a, bool trans_b);  // (G,M,K)x(G,K,N)

  // Shape plumbing.
  VarId reshape(VarId x, std::vector<int> shape);
  VarId transpose_inner(VarId x);                    // (A,B,C,D) -> (A,C,B,D)
  VarId concat_lastdim(VarId a, VarId b);

  // Sequence-model ops.
  VarId lookup_rows(VarId table, const std::vector<int>& ids,
                    std::vector<int> out_shape);
  VarId add_positional(VarId x, VarId pos);          // (B,S,E) + pos[0..S)
  VarId layer_norm(VarId x, VarId gain, VarId bias, double eps = 1e-5);
  VarId masked_softmax_lastdim(VarId scores, const Tensor& key_mask);
  VarId dropout(VarId x, double rate, std::mt19937_64& rng);
  VarId masked_max_seq(VarId x, const Tensor& mask);  // (B,S,F) -> (B,F)

  // Losses / reductions.
  VarId bce_with_logits_mean(VarId logits, const Tensor& targets,
                             const Tensor& active);
  VarId softmax_ce_mean(VarId logits, const std::vector<int>& labels);
  VarId reduce_sum(VarId x);
  VarId pick(VarId x, std::int64_t flat_index);

  void backward(VarId root);

  const Tensor& value(VarId v) const { return nodes_[static_cast<std::size_t>(v)].value; }
  // Gradient of the last backward() root w.r.t. v; zeros if v is off-path.
  const Tensor& grad(VarId v);
  bool requires_grad(VarId v) const {
    return nodes_[static_cast<std::size_t>(v)].requires_grad;
  }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily
    bool requires_grad{false};
    std::function<void()> backward;
  };

  VarId push(Tensor value, bool requires_grad, std::function<void()> bwd);
  Tensor& grad_acc(VarId v);
  bool has_grad(VarId v) const {
    return !nodes_[static_cast<std::size_t>(v)].grad.empty();
  }

  std::vector<Node> nodes_;
};

// A parameter tensor bound into a graph for one step.
struct BoundParam {
  Tensor* param{nullptr};
  VarId var{kNoVar};
};
using BindingList = std::vector<BoundParam>;

// Binds a persistent parameter into the graph and records the pairing so the
// optimizer can read its gradient back after backward().
VarId bind_param(Graph& g, Tensor& param, BindingList* binds,
                 bool requires_grad = true);

}  // namespace stylex
