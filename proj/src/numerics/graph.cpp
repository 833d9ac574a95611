#include "dense/graph.hpp"

#include <algorithm>

namespace dense {

Var Graph::push(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) throw GraphError("op input references a node that does not exist yet");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Graph::Node& Graph::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw GraphError("unknown graph node");
  return nodes_[v.id];
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw GraphError("unknown graph node");
  return nodes_[v.id];
}

std::span<float> Graph::grad_of(NodeId id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return {};
  return n.value.grad();
}

Var Graph::constant(Tensor value) { return push(std::move(value), {}, nullptr); }

Var Graph::parameter(const std::string& name, const Tensor& value, bool trainable) {
  if (auto it = params_.find(name); it != params_.end()) return Var{it->second};
  Node n;
  n.value = value;
  n.value.drop_grad();
  n.param_name = name;
  n.trainable = trainable;
  n.requires_grad = trainable;
  nodes_.push_back(std::move(n));
  params_.emplace(name, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

GradientMap Graph::backward(Var loss) {
  if (!loss.valid() || loss.id >= nodes_.size()) {
    throw GraphError("backward: loss node is not part of this graph");
  }
  Node& root = nodes_[loss.id];
  if (root.value.size() != 1) {
    throw GraphError("backward: loss must be scalar, got shape " + shape_str(root.value.shape()));
  }
  for (Node& n : nodes_) n.value.drop_grad();
  GradientMap grads;
  if (!root.requires_grad) return grads;
  root.value.grad()[0] = 1.0f;
  for (NodeId id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.value.has_grad() || !n.backward) continue;
    n.backward(*this, id);
  }
  for (const Node& n : nodes_) {
    if (n.trainable && n.value.has_grad()) {
      Tensor g(n.value.shape());
      std::copy(n.value.grad().begin(), n.value.grad().end(), g.data().begin());
      grads.emplace(n.param_name, std::move(g));
    }
  }
  return grads;
}

Tensor Graph::gradient(Var v) const {
  const Node& n = node(v);
  if (!n.value.has_grad()) return {};
  Tensor g(n.value.shape());
  std::copy(n.value.grad().begin(), n.value.grad().end(), g.data().begin());
  return g;
}

std::vector<std::string> Graph::parameter_names() const {
  std::vector<std::string> names;
  names.reserve(params_.size());
  for (const auto& [name, id] : params_) names.push_back(name);
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace dense
