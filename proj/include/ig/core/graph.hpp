#pragma once

#include <Eigen/Core>
#include <functional>
#include <utility>
#include <vector>

#include "ig/core/params.hpp"
#include "ig/core/shape.hpp"

namespace ig {

template <typename S>
class Graph;

// Handle to a node on a Graph's tape. Cheap to copy; only valid while the
// owning graph is alive. A tensor belongs to exactly one graph.
template <typename S>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Graph<S>* g, int id) : g_(g), id_(id) {}

  bool valid() const { return g_ != nullptr; }
  int id() const { return id_; }
  Graph<S>& graph() const { return *g_; }

  const Shape& shape() const;
  const ArrX<S>& values() const;
  long size() const { return values().size(); }

  // value of a single-element tensor
  S item() const {
    require(size() == 1, "item: tensor has " + std::to_string(size()) + " elements");
    return values()[0];
  }

 private:
  Graph<S>* g_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. Nodes are appended in evaluation order; backward replays
// the tape from the loss down, accumulating into node grads and, for bound
// leaves, into external Param grads. One graph per forward pass; graphs are
// cheap to build and thrown away after the optimizer step.
template <typename S>
class Graph {
 public:
  struct Node {
    Shape shape;
    ArrX<S> values;
    ArrX<S> grad;                    // empty until gradient first flows here
    std::function<void()> backprop;  // pushes this node's grad to its inputs
    bool needs_grad = false;
    Param<S>* bound = nullptr;       // set for parameter leaves
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // --- leaf constructors -------------------------------------------------

  Tensor<S> constant(Shape shape, ArrX<S> values) {
    require(numel(shape) == values.size(),
            "constant: shape " + shape_str(shape) + " does not match " +
                std::to_string(values.size()) + " values");
    return append(std::move(shape), std::move(values), false);
  }

  Tensor<S> scalar(S v) {
    ArrX<S> one(1);
    one[0] = v;
    return constant({1}, std::move(one));
  }

  Tensor<S> full(Shape shape, S v) {
    ArrX<S> a = ArrX<S>::Constant(numel(shape), v);
    return constant(std::move(shape), std::move(a));
  }

  // Parameter leaf: tracked for gradients, which backward() adds to p.grad.
  Tensor<S> param(Param<S>& p) {
    Tensor<S> t = append(p.shape, p.value, true);
    nodes_[t.id()].bound = &p;
    return t;
  }

  // Parameter values bound as a frozen constant (no gradient bookkeeping).
  Tensor<S> frozen(const Param<S>& p) { return append(p.shape, p.value, false); }

  // --- op plumbing -------------------------------------------------------

  Tensor<S> append(Shape shape, ArrX<S> values, bool needs_grad) {
    Node n;
    n.shape = std::move(shape);
    n.values = std::move(values);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Tensor<S>(this, static_cast<int>(nodes_.size()) - 1);
  }

  void set_backprop(int id, std::function<void()> fn) {
    nodes_[id].backprop = std::move(fn);
  }

  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  bool wants_grad(int id) const { return nodes_[id].needs_grad; }

  // Gradient buffer for a node, allocated (zeroed) on first touch.
  ArrX<S>& grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = ArrX<S>::Zero(numel(n.shape));
    return n.grad;
  }

  // --- backward ----------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 and replays the tape. `loss` must be scalar.
  // Node grads from an earlier backward on the same graph are not reused;
  // call backward once per graph.
  void backward(const Tensor<S>& loss) {
    require(loss.valid() && &loss.graph() == this, "backward: tensor from another graph");
    require(numel(node(loss.id()).shape) == 1,
            "backward: loss must be scalar, got " + shape_str(node(loss.id()).shape));
    if (!node(loss.id()).needs_grad) return;  // nothing reachable is trainable
    grad_buf(loss.id()).setConstant(S(1));
    for (int id = loss.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.size() == 0) continue;  // no gradient flowed here
      if (n.backprop) n.backprop();
      if (n.bound) n.bound->grad += n.grad;
    }
  }

 private:
  std::vector<Node> nodes_;
};

template <typename S>
const Shape& Tensor<S>::shape() const {
  return g_->node(id_).shape;
}

template <typename S>
const ArrX<S>& Tensor<S>::values() const {
  return g_->node(id_).values;
}

template <typename S>
Graph<S>& same_graph(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.valid() && b.valid(), "op: uninitialized tensor");
  require(&a.graph() == &b.graph(), "op: tensors belong to different graphs");
  return a.graph();
}

}  // namespace ig
