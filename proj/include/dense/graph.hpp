#pragma once

// Define-by-run reverse-mode autodiff over the handful of ops the extractor
// needs. A Graph is built fresh for every forward pass; node values are never
// mutated after creation.

#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dense/kernels.hpp"
#include "dense/tensor.hpp"

namespace dense {

using NodeId = std::size_t;

struct Var {
  NodeId id = static_cast<NodeId>(-1);
  bool valid() const { return id != static_cast<NodeId>(-1); }
};

using GradientMap = std::map<std::string, Tensor>;

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var constant(Tensor value);
  // Repeated requests for the same name return the same node.
  Var parameter(const std::string& name, const Tensor& value, bool trainable);

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var v) const;

  // Gradients of a scalar node with respect to every trainable parameter that
  // reaches it. Frozen parameters never appear in the result.
  GradientMap backward(Var loss);

  // Gradient w.r.t. an arbitrary node, valid after backward(); empty tensor
  // when no gradient reached the node.
  Tensor gradient(Var v) const;

  // Names of every parameter requested so far, sorted.
  std::vector<std::string> parameter_names() const;

  // -- ops ---------------------------------------------------------------
  Var conv1d(Var x, Var w, Var bias, const kernels::Conv1dParams& p);
  Var conv_transpose1d(Var x, Var w, int stride);
  Var cumulative_layer_norm(Var x, Var gain, Var bias, float eps);
  Var relu(Var x);
  Var prelu(Var x, Var alpha);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  // x: C x T, column: C x 1, broadcast over frames.
  Var mul_column(Var x, Var column);
  Var repeat_columns(Var column, int frames);
  Var concat_rows(Var top, Var bottom);
  Var time_mean(Var x);
  Var sum(Var x);
  Var scale(Var x, float factor);
  Var detach(Var x);
  // Scalar losses against a constant reference.
  Var snr_loss(Var est, const Tensor& ref);
  Var si_snr_loss(Var est, const Tensor& ref);

 private:
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    std::string param_name;
    bool trainable = false;
    bool requires_grad = false;
  };

  Var push(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);
  Node& node(Var v);
  const Node& node(Var v) const;
  // Gradient buffer of an input, or an empty span if it needs none.
  std::span<float> grad_of(NodeId id);
  std::span<const float> out_grad(NodeId id) const { return nodes_[id].value.grad(); }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> params_;
};

}  // namespace dense
