#include "stackvet/tape.hpp"

namespace stackvet {

template <typename T>
Tensor<T>* Tape<T>::grad_buffer(Var v) {
  Node& node = nodes_.at(v.index);
  if (!node.requires_grad) return nullptr;
  if (node.grad.dims() != node.value.dims()) node.grad = Tensor<T>(node.value.dims());
  return &node.grad;
}

template <typename T>
void Tape<T>::accumulate(Var v, const Tensor<T>& delta) {
  Tensor<T>* g = grad_buffer(v);
  if (!g) return;
  if (delta.size() != g->size()) {
    throw ShapeError("gradient " + shape_string(delta.dims()) + " does not match value " +
                     shape_string(g->dims()));
  }
  auto dst = g->values();
  auto src = delta.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Tape<T>::backward(Var loss) {
  Node& root = nodes_.at(loss.index);
  if (root.value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_string(root.value.dims()));
  }
  for (auto& node : nodes_) node.grad = Tensor<T>{};
  if (!root.requires_grad) return;
  root.grad = Tensor<T>(root.value.dims(), T(1));

  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.parameter) {
      if (node.parameter->grad.dims() != node.grad.dims()) node.parameter->zero_grad();
      auto dst = node.parameter->grad.values();
      auto src = node.grad.values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace stackvet
