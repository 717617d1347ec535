#pragma once

// Reverse-mode tape. Every op appends a node holding its forward value and a closure
// that pushes the node's gradient into its inputs. Nodes only reference earlier nodes,
// so walking the tape backwards is a reverse topological order.

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sacn/error.hpp"
#include "sacn/nn/parameter.hpp"
#include "sacn/tensor.hpp"

namespace sacn::nn {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  struct Node {
    std::string op;
    std::vector<Var> inputs;
    Matrix<T> owned;
    const Matrix<T>* view = nullptr;
    Matrix<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Var constant(Matrix<T> value) {
    Node n;
    n.op = "constant";
    n.owned = std::move(value);
    return push(std::move(n));
  }

  /// Constant leaf referencing caller-owned storage that must outlive the tape.
  Var constant_ref(const Matrix<T>& value) {
    Node n;
    n.op = "constant";
    n.view = &value;
    return push(std::move(n));
  }

  /// Leaf bound to a parameter. The value is referenced, not copied, so the parameter
  /// must outlive the tape and stay unmodified until backward() returns.
  Var parameter(Parameter<T>& p) {
    Node n;
    n.op = "param:" + p.name;
    n.view = &p.value;
    n.requires_grad = p.trainable;
    n.param = &p;
    return push(std::move(n));
  }

  Var record(std::string op, Matrix<T> value, std::vector<Var> inputs, BackwardFn backward) {
    Node n;
    n.op = std::move(op);
    n.owned = std::move(value);
    for (Var v : inputs) n.requires_grad = n.requires_grad || nodes_.at(v.id).requires_grad;
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const Matrix<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.view ? *n.view : n.owned;
  }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  const Node& node(Var v) const { return nodes_.at(v.id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer for v, zero-allocated on first access.
  Matrix<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.empty() && !value(v).empty()) n.grad = Matrix<T>(value(v).rows(), value(v).cols());
    return n.grad;
  }

  /// Seeds d(loss)/d(loss) = 1 for a 1×1 loss, runs every closure once in reverse
  /// order, then adds leaf gradients into their parameters.
  void backward(Var loss) {
    if (value(loss).size() != 1) throw ShapeError("backward needs a scalar loss, got " + value(loss).shape());
    grad(loss)[0] += T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, Var{i});
      if (n.param) n.param->grad += n.grad;
    }
  }

 private:
  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  std::deque<Node> nodes_;  // stable addresses: values may be referenced while recording
};

}  // namespace sacn::nn
