#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>

#include "stackvet/tensor.hpp"

namespace stackvet {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t index = 0;
};

// Reverse-mode autodiff record. Nodes are appended in execution order, so the
// record is already topologically sorted and backward() walks it once in
// reverse. Parameters enter as leaves; backward() adds their gradients into
// Parameter::grad, so calling it repeatedly accumulates.
template <typename T>
class Tape {
 public:
  /// Receives the node's output gradient and pushes contributions to parents.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<T> value) { return push(std::move(value), false, {}, nullptr); }

  Var leaf(Tensor<T> value, bool requires_grad) { return push(std::move(value), requires_grad, {}, nullptr); }

  Var parameter(Parameter<T>& p) { return push(p.value, true, {}, &p); }

  /// Records an op result. The node requires grad iff any parent does and
  /// gradients are enabled; otherwise `backward` is dropped.
  Var record(Tensor<T> value, std::initializer_list<Var> parents, BackwardFn backward) {
    bool needs = false;
    if (grad_enabled_)
      for (Var p : parents) needs = needs || nodes_[p.index].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : BackwardFn{}, nullptr);
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.index).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }

  /// Gradient of the last backward() with respect to v; empty if unreachable.
  const Tensor<T>& grad(Var v) const { return nodes_.at(v.index).grad; }

  /// Adds `delta` into v's gradient. No-op for nodes that do not require grad.
  void accumulate(Var v, const Tensor<T>& delta);

  /// Mutable gradient buffer for v (zero-initialized on first use); nullptr
  /// when v does not require grad.
  Tensor<T>* grad_buffer(Var v);

  bool grad_enabled() const noexcept { return grad_enabled_; }
  void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws if loss is not scalar.
  void backward(Var loss);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* parameter = nullptr;
  };

  Var push(Tensor<T> value, bool requires_grad, BackwardFn backward, Parameter<T>* param) {
    nodes_.push_back(Node{std::move(value), Tensor<T>{}, requires_grad, std::move(backward), param});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  // deque keeps references to earlier nodes stable while ops append.
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace stackvet
