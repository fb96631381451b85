#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "voc/rng.hpp"

namespace voc::nn {

/// Trainable weight with persistent storage. Graphs bind to Parameters by
/// pointer; backward() accumulates into grad, the optimizer consumes and
/// clears it.
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string name, std::vector<int> shape);

  std::size_t numel() const { return data.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  /// N(0, std) init, consuming numel draws from rng.
  void init_normal(Rng& rng, double std_dev);
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

using TensorId = int;

/// Reverse-mode tape over dense f64 tensors.
///
/// Each op appends one node (creation order = topological order) and, when
/// the graph is recording, a closure that pushes gradients to its inputs.
/// backward(loss) walks the tape once in exact reverse order, then adds each
/// bound node's gradient into its Parameter. A graph is single-use: one
/// forward pass, at most one backward.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  TensorId input(std::vector<int> shape, std::vector<double> data);
  TensorId constant(std::vector<int> shape, std::vector<double> data) {
    return input(std::move(shape), std::move(data));
  }
  TensorId param(Parameter& p);

  /// [m,k]x[k,n] -> [m,n], or batched [B,m,k]x[k,n] -> [B,m,n].
  TensorId matmul(TensorId a, TensorId b);

  /// Elementwise sum; b's shape must be a suffix of a's shape and is
  /// broadcast over the leading dims (covers bias add and equal shapes).
  TensorId add(TensorId a, TensorId b);

  /// table [V,C] gathered at ids (values in [0,V)) -> [ids_shape...,C].
  TensorId embedding(TensorId table, std::span<const int> ids, std::vector<int> ids_shape);

  /// Normalizes the last dim (eps 1e-5), then applies per-feature gain/bias.
  TensorId layer_norm(TensorId x, TensorId gain, TensorId bias);

  /// Softmax over the last dim.
  TensorId softmax(TensorId x);

  /// Fused causal multi-head self-attention. qkv is [B,T,3C] laid out as
  /// [q|k|v] blocks of C; returns [B,T,C]. Position t attends to u <= t.
  TensorId causal_self_attention(TensorId qkv, int n_heads);

  TensorId relu(TensorId x);
  TensorId gelu(TensorId x);  // exact erf form
  TensorId tanh_act(TensorId x);

  /// Concatenation along the last dim; leading dims must match.
  TensorId concat(TensorId a, TensorId b);

  /// Mean negative log-likelihood over positions with target >= 0
  /// (target -1 masks a position out); logits [..., V] -> scalar.
  TensorId cross_entropy(TensorId logits, std::span<const int> targets);

  /// Mean squared error against a constant target of equal shape -> scalar.
  TensorId mse(TensorId pred, std::span<const double> target);

  /// Sum of all elements -> scalar.
  TensorId sum(TensorId x);

  /// Seeds d(loss)=1 and replays the tape backwards, accumulating Parameter
  /// gradients. loss must be scalar; a second call without a fresh forward
  /// pass throws, as does calling on a non-recording graph.
  void backward(TensorId loss);

  const std::vector<int>& shape(TensorId id) const;
  std::span<const double> data(TensorId id) const;
  std::span<const double> grad(TensorId id) const;
  double scalar(TensorId id) const;

 private:
  struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;
    Parameter* bound = nullptr;
    std::function<void()> backward_fn;
  };

  Node& node(TensorId id);
  const Node& node(TensorId id) const;
  TensorId push(Node n);

  std::vector<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
};

std::size_t numel_of(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace voc::nn
