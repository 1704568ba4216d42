#include "cvar/numerics/tensor.hpp"

#include <sstream>

#include "cvar/common/error.hpp"

namespace cvar::num {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  node_ = std::make_shared<Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach(bool requires_grad) const {
  return Tensor(node_->shape, node_->value, requires_grad);
}

namespace {
template <typename T>
thread_local GradTape<T>* g_active_tape = nullptr;
}

template <typename T>
GradTape<T>::GradTape() : previous_(g_active_tape<T>) {
  g_active_tape<T> = this;
}

template <typename T>
GradTape<T>::~GradTape() {
  g_active_tape<T> = previous_;
}

template <typename T>
GradTape<T>* GradTape<T>::active() {
  return g_active_tape<T>;
}

template <typename T>
void GradTape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward(): loss was not produced through recorded ops");
  }
  auto& root = *loss.node();
  root.grad_buffer()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
  }
  clear();
}

template <typename T>
void GradTape<T>::clear() {
  // Intermediate grads are dropped; leaves keep theirs.
  for (auto& n : nodes_) {
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->backward = nullptr;
    n->parents.clear();
  }
  nodes_.clear();
}

template <typename T>
void backward(const Tensor<T>& loss) {
  auto* tape = GradTape<T>::active();
  if (!tape) throw std::logic_error("backward(): no active GradTape on this thread");
  tape->backward(loss);
}

template class Tensor<float>;
template class Tensor<double>;
template class GradTape<float>;
template class GradTape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace cvar::num
